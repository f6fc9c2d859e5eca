# Exception hierarchy for the short-vector simulator.

class SvsimError(Exception):
    '''
    Root of every error raised by svsim
    '''


class ConfigError(SvsimError, ValueError):
    '''
    Bad machine parameters, bad config file lines, bad operand ranges
    '''


class ProgramError(SvsimError, ValueError):
    '''
    Diagnostic for the textual program format, with a source position
    '''

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        if line is None:
            super().__init__(message)
        else:
            super().__init__(f"{line}:{column or 1}: {message}")


class KernelError(SvsimError, ValueError):
    pass


class UnknownTagError(SvsimError, KeyError):
    pass


class SchedulingViolation(SvsimError, AssertionError):
    '''
    Raised by the online monitors when the scheduler breaks a hazard,
    port or oldest-write rule. Always a simulator bug.
    '''


class DeadlockError(SvsimError, RuntimeError):

    def __init__(self, message, dump=""):
        self.dump = dump
        super().__init__(f"{message}\n{dump}" if dump else message)
