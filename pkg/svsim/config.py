"""
Machine configuration for the short-vector simulator.

The defaults describe the evaluated SV-Full machine: 512-bit VLEN, 256-bit
DLEN, two arithmetic sequencers, 4x3R1W register file and a 4-bank
last-level cache that returns data in 4 cycles.
"""

import logging
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

from svsim.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "SVSIM_CONFIG"

VALID_SEWS = (8, 16, 32, 64)
VALID_LMULS = (1, 2, 4, 8)

DEFAULT_FU_LATENCY = {
    "VADD": 2,
    "VMUL": 3,
    "VMACC": 3,
    "VFMA_OPAQUE": 4,
}


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class FrontendConfig:
    page_bytes: int = 4096
    fault_pages: frozenset = frozenset()
    tlb_ports: int = 1
    dispatch_ipc: int = 1

    def __post_init__(self):
        if not _is_pow2(self.page_bytes):
            raise ConfigError(f"page_bytes ({self.page_bytes}) must be a power of two")
        if self.tlb_ports != 1:
            raise ConfigError("the frontend models a single-ported TLB (tlb_ports=1)")
        if self.dispatch_ipc < 1:
            raise ConfigError(f"dispatch_ipc ({self.dispatch_ipc}) must be at least 1")
        object.__setattr__(self, "fault_pages", frozenset(int(p) for p in self.fault_pages))


@dataclass(frozen=True)
class VrfConfig:
    banks: int = 4
    read_ports_per_bank: int = 3
    write_ports_per_bank: int = 1
    dedicated_load_wport: bool = False

    def __post_init__(self):
        if self.banks < 1 or self.read_ports_per_bank < 1 or self.write_ports_per_bank < 1:
            raise ConfigError("VRF banks and port counts must be positive")


@dataclass(frozen=True)
class MemConfig:
    # bytes_per_bank_per_cycle=0 means "line bytes / banks", i.e. DLEN bits/cycle aggregate
    banks: int = 4
    bytes_per_bank_per_cycle: int = 0
    base_latency: int = 4
    inject_latency: int = 0
    bank_queue_depth: int = 8
    rw_turnaround: bool = False
    turnaround_streak: int = 8

    def __post_init__(self):
        if self.banks < 1:
            raise ConfigError(f"mem.banks ({self.banks}) must be positive")
        if self.base_latency < 1:
            raise ConfigError(f"mem.base_latency ({self.base_latency}) must be at least 1")
        if self.inject_latency < 0:
            raise ConfigError(f"mem.inject_latency ({self.inject_latency}) cannot be negative")
        if self.bank_queue_depth < 1:
            raise ConfigError(f"mem.bank_queue_depth ({self.bank_queue_depth}) must be positive")
        if self.bytes_per_bank_per_cycle < 0:
            raise ConfigError("mem.bytes_per_bank_per_cycle cannot be negative")


@dataclass(frozen=True)
class LsuConfig:
    load_dq_depth: int = 4
    store_dq_depth: int = 4
    inflight_loads: int = 8
    inflight_stores: int = 8
    store_buffer_rows: int = 4

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"lsu.{f.name} must be at least 1")


@dataclass(frozen=True)
class Features:
    dae: bool = True
    ooo: bool = True


@dataclass(frozen=True)
class SimConfig:
    """Machine parameters of one simulated vector unit instance.

    Every field, including the nested groups, can be named from a config
    file with dotted keys (``mem.inject_latency=100``).
    """

    vlen: int = 512
    dlen: int = 256
    num_arch_regs: int = 32
    iq_depth: int = 4
    dispatch_q_depth: int = 4
    num_arith_seqs: int = 2
    arith_issue_width: int = 1
    fu_latency: Mapping = field(default_factory=lambda: dict(DEFAULT_FU_LATENCY))
    no_bypass: bool = False
    check_hazards: bool = True
    watchdog_factor: int = 10
    features: Features = field(default_factory=Features)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    vrf: VrfConfig = field(default_factory=VrfConfig)
    mem: MemConfig = field(default_factory=MemConfig)
    lsu: LsuConfig = field(default_factory=LsuConfig)

    def __post_init__(self):
        if self.dlen < 8 or self.dlen % 8 != 0:
            raise ConfigError(f"DLEN ({self.dlen}) must be a positive multiple of 8")
        if self.dlen > self.vlen:
            raise ConfigError(f"DLEN ({self.dlen}) cannot exceed VLEN ({self.vlen})")
        if self.vlen % self.dlen != 0:
            raise ConfigError(f"VLEN ({self.vlen}) must be divisible by DLEN ({self.dlen})")
        if not 1 <= self.num_arch_regs <= 32:
            raise ConfigError(f"num_arch_regs ({self.num_arch_regs}) must be in 1..32")
        if self.iq_depth < 0 or self.dispatch_q_depth < 0:
            raise ConfigError("iq_depth and dispatch_q_depth must be >= 0")
        if self.num_arith_seqs < 1 or self.arith_issue_width < 1:
            raise ConfigError("num_arith_seqs and arith_issue_width must be at least 1")
        if self.watchdog_factor < 1:
            raise ConfigError("watchdog_factor must be at least 1")
        latency = dict(DEFAULT_FU_LATENCY)
        latency.update(self.fu_latency)
        unknown = set(latency) - set(DEFAULT_FU_LATENCY)
        if unknown:
            raise ConfigError(f"fu_latency names unknown opcodes: {sorted(unknown)}")
        if any(v < 1 for v in latency.values()):
            raise ConfigError("functional unit latencies must be at least 1 cycle")
        object.__setattr__(self, "fu_latency", latency)
        total_egs = self.total_egs
        if total_egs % self.vrf.banks != 0:
            raise ConfigError(f"vrf.banks ({self.vrf.banks}) must divide the {total_egs} element groups")
        if self.frontend.page_bytes < self.line_bytes:
            raise ConfigError(f"page_bytes must be at least DLEN/8 ({self.line_bytes})")

    @property
    def chime(self) -> int:
        return self.vlen // self.dlen

    @property
    def total_egs(self) -> int:
        return self.vlen * self.num_arch_regs // self.dlen

    @property
    def line_bytes(self) -> int:
        return self.dlen // 8

    @property
    def mem_bytes_per_bank_per_cycle(self) -> int:
        if self.mem.bytes_per_bank_per_cycle:
            return self.mem.bytes_per_bank_per_cycle
        return max(1, self.line_bytes // self.mem.banks)

    @property
    def arith_paths(self) -> list:
        return [f"arith{i}" for i in range(self.num_arith_seqs)]

    @property
    def paths(self) -> list:
        return ["load", "store"] + self.arith_paths


PRESETS = {
    "sv-full": {"vlen": "512", "dlen": "256", "features.dae": "true", "features.ooo": "true"},
    "sv-base": {"vlen": "512", "dlen": "256", "features.dae": "false", "features.ooo": "false"},
    "sv-base+dae": {"vlen": "512", "dlen": "256", "features.dae": "true", "features.ooo": "false"},
    "sv-base+ooo": {"vlen": "512", "dlen": "256", "features.dae": "false", "features.ooo": "true"},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, current, text: str):
    text = text.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text, 0)
        if isinstance(current, frozenset):
            if not text:
                return frozenset()
            return frozenset(int(t, 0) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    raise ConfigError(f"{key} is not a settable scalar field")


def apply_overrides(config: SimConfig, overrides: Mapping[str, str]) -> SimConfig:
    '''
    Returns a copy of config with dotted-key string overrides applied.
    Raises ConfigError for unknown keys or unparsable values.
    '''
    top_changes = {}
    nested = {}
    latency = dict(config.fu_latency)
    for raw_key, value in overrides.items():
        key = raw_key.strip()
        head, _, rest = key.partition(".")
        head = head.lower()
        if head == "fu_latency":
            op = rest.upper()
            if op not in DEFAULT_FU_LATENCY:
                raise ConfigError(f"unknown key {key!r}")
            latency[op] = _coerce(key, 0, value)
            continue
        if not hasattr(config, head) or head.startswith("_"):
            raise ConfigError(f"unknown key {key!r}")
        current = getattr(config, head)
        if is_dataclass(current):
            name = rest.lower()
            if not name or name not in {f.name for f in fields(current)}:
                raise ConfigError(f"unknown key {key!r}")
            nested.setdefault(head, {})[name] = _coerce(key, getattr(current, name), value)
        else:
            if rest or head not in {f.name for f in fields(config)}:
                raise ConfigError(f"unknown key {key!r}")
            top_changes[head] = _coerce(key, current, value)
    for group, changes in nested.items():
        top_changes[group] = replace(getattr(config, group), **changes)
    top_changes["fu_latency"] = latency
    return replace(config, **top_changes)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_config(path: Optional[str] = None, preset: Optional[str] = None,
                overrides: Optional[Mapping[str, str]] = None) -> SimConfig:
    '''
    Builds a SimConfig: defaults < preset < config file < overrides.
    The config file defaults to the SVSIM_CONFIG environment variable.
    '''
    config = SimConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        config = apply_overrides(config, PRESETS[preset])
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        config = apply_overrides(config, parse_config_text(text, source=str(path)))
        logger.debug("loaded config file %s", path)
    if overrides:
        config = apply_overrides(config, overrides)
    return config
