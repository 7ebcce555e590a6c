"""Exception hierarchy shared by every pipeline stage.

The CLI turns any ``PipelineError`` into a single machine-readable line via
``to_record``; library code raises the most specific subclass it can.
"""


class PipelineError(Exception):
    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.message = message
        self.path = None if path is None else str(path)

    def to_record(self) -> dict:
        return {"error": type(self).__name__, "message": self.message, "path": self.path}


class ConfigError(PipelineError, ValueError):
    pass


class CorpusIOError(PipelineError, OSError):
    """File-level failure, always reported with the offending path."""


class FilterDesignError(PipelineError, ValueError):
    pass


class FilterInstabilityError(PipelineError, ArithmeticError):
    pass


class FeatureShapeError(PipelineError, ValueError):
    pass


class SnrUndefinedError(PipelineError, ValueError):
    """Signal-plus-noise power does not exceed noise power."""


class ZeroPowerError(PipelineError, ValueError):
    pass


class EmptyNoisePoolError(PipelineError, ValueError):
    pass


class ModelShapeError(PipelineError, ValueError):
    pass


class CheckpointFormatError(PipelineError, ValueError):
    pass


class SplitError(PipelineError, ValueError):
    pass


class MetricUndefinedError(PipelineError, ValueError):
    pass


class TrainingDivergedError(PipelineError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss

    def to_record(self) -> dict:
        record = super().to_record()
        record["epoch"] = self.epoch
        return record
