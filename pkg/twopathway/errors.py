"""
Exception hierarchy shared by every module of the package.
"""


class TwoPathError(Exception):
    """Base class for all errors raised by twopathway."""


class ShapeError(TwoPathError, ValueError):
    """Tensor shapes or layer geometry do not fit together."""


class LabelError(TwoPathError, ValueError):
    """Malformed one-hot rows or class ids out of range."""


class NumericError(TwoPathError, FloatingPointError):
    """A NaN or Inf appeared in a tensor."""


class ConfigError(TwoPathError):
    """Invalid experiment configuration or missing prerequisite."""


class DatasetFormatError(TwoPathError):
    """A dataset file does not follow its binary or PGM contract."""


class SubsetError(TwoPathError):
    """A class subset cannot be drawn from the available classes."""


class CheckpointError(TwoPathError):
    """A checkpoint file is malformed or incompatible."""


class DivergenceError(TwoPathError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int, lr: float):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.lr = lr

    def __reduce__(self):
        return type(self), (str(self), self.epoch, self.batch, self.lr)


class RetrievalError(TwoPathError):
    """Associative retrieval cannot run (missing codebook, bad geometry)."""


class TrainingInterrupted(TwoPathError):
    """A shutdown request stopped training; a partial checkpoint was written."""

    def __init__(self, message: str, checkpoint: str):
        super().__init__(message)
        self.checkpoint = checkpoint

    def __reduce__(self):
        return type(self), (str(self), self.checkpoint)
