"""
Exception hierarchy shared by every subpackage. The CLI catches ComHymbaError
and reports the message on a single line.
"""


class ComHymbaError(Exception):
    """Base class of every error raised on purpose by this package."""


class ShapeMismatchError(ComHymbaError, ValueError):
    pass


class NonFiniteInputError(ComHymbaError, ValueError):
    pass


class ConfigurationError(ComHymbaError, ValueError):
    pass


class MaskingError(ComHymbaError, ValueError):
    pass


class ChannelModelError(ComHymbaError, ValueError):
    pass


class MetricError(ComHymbaError, ValueError):
    pass


class TensorFormatError(ComHymbaError):
    pass


class CheckpointError(ComHymbaError):
    pass


class TrainingDivergedError(ComHymbaError):
    """Raised when the joint loss stops being finite.

    Parameters
    ----------
    step: int
        Optimizer step at which the loss diverged.
    record: dict
        Per-term loss values of the failing step.
    """

    def __init__(self, step, record):
        self.step = step
        self.record = dict(record)
        terms = ", ".join(f"{k}={v!r}" for k, v in self.record.items())
        super().__init__(f"non-finite loss at step {step}: {terms}")
