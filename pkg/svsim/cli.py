"""
Command-line front end: `run`, `sweep`, `snapshot` and `dump-arch`.

Exit status is 0 on success, 2 when the program trapped and 1 on usage,
config or program errors.
"""

import argparse
import itertools
import logging
import multiprocessing as mp
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
from pythonjsonlogger import jsonlogger

from svsim.config import PRESETS, SimConfig, apply_overrides, load_config
from svsim.engine import Simulator, latency_bound, run, trace_frame
from svsim.errors import SvsimError
from svsim.isa import VType
from svsim.memsys import parse_memory_image
from svsim.oracle import dump_arch, exec_program
from svsim.program import KERNELS, Program, gen_kernel, parse, parse_size

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TRAP = 2

DEFAULT_CAP = 1024

DEFAULT_SIZES = {
    "axpy": "1024",
    "memcpy": "1024",
    "gemm_tile": "8x8x8",
    "transpose": "16x4",
    "gather": "256",
    "stream_load": "2048",
    "gemv": "16x16",
    "conv1d": "512",
    "jacobi2d": "10x66",
    "spmv": "256x4",
    "random": "0",
}

CONFIG_COLUMNS = ["vlen", "dlen", "iq_depth", "dispatch_q_depth", "num_arith_seqs",
                  "features.dae", "features.ooo", "mem.inject_latency"]


def configure_logging(level: str = "WARNING", json: bool = False):
    handler = logging.StreamHandler(sys.stderr)
    if json:
        handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def _parse_assignments(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise SvsimError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(args) -> SimConfig:
    overrides = _parse_assignments(args.set)
    flag_map = {
        "vlen": args.vlen, "dlen": args.dlen, "iq_depth": args.iq_depth,
        "mem.inject_latency": args.inject_latency,
    }
    for key, value in flag_map.items():
        if value is not None:
            overrides[key] = str(value)
    if args.fault_page:
        overrides["frontend.fault_pages"] = ",".join(args.fault_page)
    if args.rw_turnaround:
        overrides["mem.rw_turnaround"] = "true"
    if args.dedicated_load_wport:
        overrides["vrf.dedicated_load_wport"] = "true"
    return load_config(args.config, args.preset, overrides)


def load_program(args, config: SimConfig) -> Program:
    if args.program:
        try:
            text = Path(args.program).read_text()
        except OSError as e:
            raise SvsimError(f"cannot read program {args.program}: {e}") from e
        program = parse(text)
    elif args.kernel:
        size = parse_size(args.size or DEFAULT_SIZES.get(args.kernel, "256"))
        program = gen_kernel(args.kernel, size, VType(args.sew, args.lmul, 0), config, seed=args.seed)
    else:
        raise SvsimError("one of --program or --kernel is required")
    if args.mem_image:
        try:
            text = Path(args.mem_image).read_text()
        except OSError as e:
            raise SvsimError(f"cannot read memory image {args.mem_image}: {e}") from e
        program.data_init.update(parse_memory_image(text, source=args.mem_image))
    return program


def config_row(config: SimConfig) -> dict:
    flat = asdict(config)
    row = {}
    for key in CONFIG_COLUMNS:
        value = flat
        for part in key.split("."):
            value = value[part]
        row[key] = int(value) if isinstance(value, bool) else value
    return row


def metrics_row(config: SimConfig, kernel: str, metrics) -> dict:
    row = config_row(config)
    row["kernel"] = kernel
    row.update(metrics.as_row(len(config.paths)))
    return row


def _write_frame(frame: pd.DataFrame, path: Optional[str]):
    if path and path != "-":
        frame.to_csv(path, index=False)
    else:
        frame.to_csv(sys.stdout, index=False)


def cmd_run(args) -> int:
    config = build_config(args)
    program = load_program(args, config)
    state, metrics, trace = run(program, config, record_trace=bool(args.trace))
    kernel = args.kernel or Path(args.program).stem
    _write_frame(pd.DataFrame([metrics_row(config, kernel, metrics)]), args.csv)
    if args.trace:
        trace_frame(trace).to_csv(args.trace, index=False)
    if args.dump:
        Path(args.dump).write_text(dump_arch(state))
    if state.trap is not None:
        print(state.trap, file=sys.stderr)
        return EXIT_TRAP
    return EXIT_OK


def _parse_axis(text: str):
    if "=" not in text:
        raise SvsimError(f"axis must look like key=v1,v2,..., got {text!r}")
    key, values = text.split("=", 1)
    values = [v.strip() for v in values.split(",") if v.strip()]
    if not values:
        raise SvsimError(f"axis {key!r} has no values")
    return key.strip(), values


def _run_point(point):
    config, kernel, size, sew, lmul, seed, program = point
    if program is None:
        program = gen_kernel(kernel, size, VType(sew, lmul, 0), config, seed=seed)
    _, metrics, _ = run(program, config, record_trace=False)
    return metrics


def add_speedup_columns(frame: pd.DataFrame, axes: Sequence[str]) -> pd.DataFrame:
    '''
    pct_speedup_vs_prev_<axis>: cycle-count speedup of each point over the
    previous value of that axis with every other column held fixed.
    '''
    frame = frame.copy()
    keys = [a for a in axes] + ["kernel", "seed"]
    for axis in axes:
        others = [k for k in keys if k != axis]
        prev = frame.groupby(others, sort=False)["cycles"].shift(1)
        frame[f"pct_speedup_vs_prev_{axis}"] = ((prev / frame["cycles"] - 1.0) * 100.0).round(4)
    if axes:
        frame["pct_speedup_vs_prev"] = frame[f"pct_speedup_vs_prev_{axes[0]}"]
    return frame


def sweep(base: SimConfig, axes, kernels, seeds=(0,), size=None, sew=32, lmul=8,
          program: Optional[Program] = None, cap: int = DEFAULT_CAP, jobs: int = 1) -> pd.DataFrame:
    '''
    Runs the cross product of axes x kernels x seeds. Rows come back in
    axis order whatever order the workers finish in.
    '''
    names = [k for k, _ in axes]
    combos = list(itertools.product(*[v for _, v in axes])) or [()]
    kernels = list(kernels) if program is None else ["program"]
    total = len(combos) * len(kernels) * len(seeds)
    if total > cap:
        raise SvsimError(f"sweep has {total} runs, over the cap of {cap}")
    points, labels = [], []
    for combo in combos:
        config = apply_overrides(base, dict(zip(names, combo)))
        for kernel in kernels:
            for seed in seeds:
                ksize = parse_size(size or DEFAULT_SIZES.get(kernel, "256"))
                points.append((config, kernel, ksize, sew, lmul, seed, program))
                labels.append((combo, kernel, seed, config))
    logger.info("sweeping %d points on %d worker(s)", len(points), jobs)
    if jobs > 1:
        with mp.Pool(jobs) as pool:
            results = pool.map(_run_point, points)
    else:
        results = [_run_point(p) for p in points]
    rows = []
    for (combo, kernel, seed, config), metrics in zip(labels, results):
        row = dict(zip(names, combo))
        row.update(metrics_row(config, kernel, metrics))
        row["seed"] = seed
        rows.append(row)
    frame = pd.DataFrame(rows)
    for name in names:
        try:
            frame[name] = pd.to_numeric(frame[name])
        except (ValueError, TypeError):
            pass
    return add_speedup_columns(frame, names)


def find_knee(frame: pd.DataFrame, axis: str = "mem.inject_latency", metric: str = "utilization",
              threshold: float = 0.95):
    '''
    Largest axis value whose metric stays within threshold of the
    metric at the smallest axis value.
    '''
    ordered = frame.sort_values(axis)
    baseline = ordered[metric].iloc[0]
    keep = ordered[ordered[metric] >= threshold * baseline]
    return keep[axis].max()


def cmd_sweep(args) -> int:
    config = build_config(args)
    axes = [_parse_axis(a) for a in args.axis or ()]
    kernels = [k.strip() for k in args.kernels.split(",")] if args.kernels else [args.kernel or "axpy"]
    program = load_program(args, config) if args.program else None
    seeds = [int(s, 0) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    frame = sweep(config, axes, kernels, seeds, size=args.size, sew=args.sew, lmul=args.lmul,
                  program=program, cap=args.cap, jobs=args.jobs)
    _write_frame(frame, args.out)
    if args.knee and axes:
        knee = find_knee(frame, axes[0][0])
        print(f"knee: {knee} (analytic bound {latency_bound(config)})", file=sys.stderr)
    return EXIT_OK


def cmd_snapshot(args) -> int:
    config = build_config(args)
    program = load_program(args, config)
    sim = Simulator(program, config, record_trace=False)
    sim.watch(args.at_cycle)
    sim.run(max_cycles=args.at_cycle + 1)
    for row in sim.snapshots.get(args.at_cycle, []):
        print(row)
    return EXIT_OK


def cmd_dump_arch(args) -> int:
    config = build_config(args)
    program = load_program(args, config)
    if args.oracle:
        state = exec_program(program, config)
    else:
        state, _, _ = run(program, config, record_trace=False)
    sys.stdout.write(dump_arch(state))
    return EXIT_TRAP if state.trap is not None else EXIT_OK


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file (default: $SVSIM_CONFIG)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")
    p.add_argument("--vlen", type=int)
    p.add_argument("--dlen", type=int)
    p.add_argument("--iq-depth", type=int)
    p.add_argument("--inject-latency", type=int)
    p.add_argument("--fault-page", action="append", help="page number that faults (repeatable)")
    p.add_argument("--rw-turnaround", action="store_true")
    p.add_argument("--dedicated-load-wport", action="store_true",
                   help="give loads their own VRF write port per bank")
    p.add_argument("--program", help="program text file")
    p.add_argument("--kernel", choices=sorted(KERNELS) + ["random"])
    p.add_argument("--size", help="problem size, e.g. 1024 or 8x8x8")
    p.add_argument("--sew", type=int, default=32)
    p.add_argument("--lmul", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mem-image", help="memory image file of '0x<addr> <hex>' lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--log-json", action="store_true", help="JSON log records on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one program and print a metrics CSV row")
    _common(p)
    p.add_argument("--csv", help="metrics CSV path (default stdout)")
    p.add_argument("--trace", help="per-cycle trace CSV path")
    p.add_argument("--dump", help="architectural state dump path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _common(p)
    p.add_argument("--axis", action="append", metavar="KEY=V1,V2,...")
    p.add_argument("--kernels", help="comma separated kernel names")
    p.add_argument("--seeds", help="comma separated seeds")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--knee", action="store_true", help="report the first axis's 95%% knee")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("snapshot", help="print the scoreboard window at one cycle")
    _common(p)
    p.add_argument("--at-cycle", type=int, required=True)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("dump-arch", help="print the final architectural state")
    _common(p)
    p.add_argument("--oracle", action="store_true", help="use the reference model instead of the timing model")
    p.set_defaults(func=cmd_dump_arch)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        configure_logging(args.log_level, args.log_json)
        return args.func(args)
    except (SvsimError, ValueError) as e:
        print(f"svsim: {e}", file=sys.stderr)
        return EXIT_ERROR
