'''
Exception hierarchy shared by every dagjoint module.
'''


class DagJointError(Exception):
    """Base class for all dagjoint errors."""


class ValidationError(DagJointError, ValueError):
    """A precondition of an operation does not hold (CLI exit code 2)."""


class SceneError(ValidationError):
    pass


class AnchorError(ValidationError):
    pass


class FootprintError(ValidationError):
    pass


class LabelingError(ValidationError):
    pass


class GraphError(ValidationError):
    pass


class CycleError(GraphError):
    pass


class ShapeError(ValidationError):
    pass


class AggregationError(ValidationError):
    pass


class MetricError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


class CycleLimitExceeded(DagJointError):
    """Raised when cycle enumeration passes its limit."""

    def __init__(self, limit):
        super().__init__(f"more than {limit} elementary cycles")
        self.limit = limit


class DivergenceError(DagJointError, RuntimeError):
    """Training produced a non-finite loss (CLI exit code 3)."""

    def __init__(self, stage, epoch, batch, scene_ids, loss):
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
        self.scene_ids = list(scene_ids)
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} in stage {stage}, epoch {epoch}, batch {batch} "
            f"(scenes: {', '.join(self.scene_ids)})"
        )
