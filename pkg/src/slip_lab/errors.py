"""Exception hierarchy shared by all modules."""


class SlipError(Exception):
    """Base class for every error raised by slip_lab."""


class DegenerateGeometry(SlipError):
    pass


class NotAscending(SlipError):
    pass


class NoTouchdown(SlipError):
    pass


class Fall(SlipError):
    pass


class NoLiftoff(SlipError):
    pass


class NonPositiveLength(SlipError):
    pass


class Overdamped(SlipError):
    pass


class OutOfWindow(SlipError):
    pass


class NoBottom(SlipError):
    pass


class NoLiftoffSolution(SlipError):
    pass


class ZeroNorm(SlipError):
    pass


class MaxIterations(SlipError):
    """Iteration budget exhausted; ``result`` holds the best point found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class TooFewStrides(SlipError):
    pass


class EmptySeries(SlipError):
    pass


class NonConvergent(SlipError):
    pass


class ZeroSweep(SlipError):
    pass


class NoMinimum(SlipError):
    pass


class MalformedFile(SlipError):
    pass


class NoApexPair(SlipError):
    pass


class ControllerStageError(SlipError):
    """A deadbeat pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
