"""Exception hierarchy shared across the package."""


class BowelDetError(Exception):
    """Base class for all package errors."""


class DecodeError(BowelDetError):
    """WAV container is malformed or truncated."""


class UnsupportedFormat(BowelDetError):
    """WAV codec or sample layout we do not decode."""


class InvalidCutoff(BowelDetError):
    """Low-pass cutoff outside (0, nyquist)."""


class InvalidFrequency(BowelDetError):
    """Negative frequency passed to the mel mapping."""


class InvalidConfig(BowelDetError):
    """Configuration violates an invariant."""


class SignalTooShort(BowelDetError):
    """Signal shorter than one analysis frame."""


class ParseError(BowelDetError):
    """Annotation line could not be parsed."""


class InvalidInterval(BowelDetError):
    """Interval with start >= end."""


class EmptyClassError(BowelDetError):
    """Sampler has no windows of a requested class."""


class ShapeError(BowelDetError):
    """Tensor shape incompatible with a layer."""


class StateError(BowelDetError):
    """Operation requires state that is not present (e.g. backward before forward)."""


class InvalidHyperparameter(BowelDetError):
    """Optimizer hyperparameter out of range."""


class TrainingDiverged(BowelDetError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, step: int | None = None):
        self.epoch = epoch
        self.step = step
        msg = f"loss is not finite at epoch {epoch}"
        if step is not None:
            msg += f", step {step}"
        super().__init__(msg)


class WindowTooLarge(BowelDetError):
    """Sliding window longer than the recording."""


class IncompatibleModel(BowelDetError):
    """Model was trained against a different spectrogram configuration."""


class CorruptModel(BowelDetError):
    """Weight file payload does not match its header."""


class MaskLengthError(BowelDetError):
    """Binary masks of different lengths compared."""


class EvaluationError(BowelDetError):
    """Prediction/ground-truth id sets do not line up."""


class PackingError(BowelDetError):
    """Requested bursts do not fit into a synthetic recording."""


class StratificationWarning(UserWarning):
    """Too few recordings to stratify; fell back to a plain shuffle."""
