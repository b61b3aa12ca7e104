"""Exception hierarchy shared by every evsim module."""


class EvsimError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details

    @property
    def kind_name(self) -> str:
        return type(self).__name__


# routing
class UnknownNode(EvsimError):
    pass


class NoPath(EvsimError):
    pass


class EmptyPath(EvsimError):
    pass


class InvalidGraph(EvsimError):
    pass


# scenario
class ZeroLengthPath(EvsimError):
    pass


class InvalidConfig(EvsimError):
    def __init__(self, message: str = "", field: str | None = None, **details):
        super().__init__(message, field=field, **details)
        self.field = field


class SamplingError(EvsimError):
    pass


# clustering
class TooFewPoints(EvsimError):
    pass


class TooFewValues(EvsimError):
    pass


# rl core
class DimensionMismatch(EvsimError):
    pass


class NoLegalAction(EvsimError):
    pass


class BufferTooSmall(EvsimError):
    pass


class NonFiniteLoss(EvsimError):
    pass


class ArchitectureMismatch(EvsimError):
    pass


# environment
class NoActiveTrip(EvsimError):
    pass


class IllegalAction(EvsimError):
    pass


class InternalInconsistency(EvsimError):
    pass


class NonFiniteReward(EvsimError):
    pass


# orchestrator
class PortOverflow(EvsimError):
    pass


class CheckpointError(EvsimError):
    pass


# analysis
class ZeroVariance(EvsimError):
    pass


class KeyMismatch(EvsimError):
    pass


class InsufficientOverlap(EvsimError):
    pass
