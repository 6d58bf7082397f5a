"""Exception types shared across the framework.

Every failure mode raised by the library derives from TallyError so callers
can catch framework errors without swallowing unrelated bugs.
"""


class TallyError(Exception):
    """Base class for all framework errors."""


# --- tensor core ---

class ShapeMismatch(TallyError):
    pass


class BroadcastError(TallyError):
    pass


class DTypeError(TallyError):
    pass


class DTypeOverflow(TallyError):
    pass


class AxisOutOfRange(TallyError):
    pass


class InvalidPermutation(TallyError):
    pass


# --- autograd ---

class GradModeOff(TallyError):
    pass


class BackwardFromNonScalar(TallyError):
    pass


class DisconnectedGraph(TallyError):
    pass


# --- nn / optim / training ---

class TargetOutOfRange(TallyError):
    pass


class EmptyParamList(TallyError):
    pass


class MissingGrad(TallyError):
    pass


class StepOutOfRange(TallyError):
    pass


class NonFiniteLoss(TallyError):
    pass


class CorruptCheckpoint(TallyError):
    pass


class MissingTensor(TallyError):
    pass


# --- spatial ---

class KernelTooLarge(TallyError):
    pass


class WindowTooLarge(TallyError):
    pass


# --- language ---

class VocabTooSmall(TallyError):
    pass


class InvalidTokenId(TallyError):
    pass


class TokenIdOutOfRange(TallyError):
    pass


class OddDimension(TallyError):
    pass


class SequenceTooLong(TallyError):
    pass


class CacheOverflow(TallyError):
    pass


# --- perf / quantization / benchmarking ---

class InvalidRange(TallyError):
    pass


class DomainError(TallyError):
    pass


class LevelMismatch(TallyError):
    pass


# --- harness ---

class MilestoneFailed(TallyError):
    pass
