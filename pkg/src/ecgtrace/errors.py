"""Exception types shared across the pipeline.

Everything deriving from :class:`PipelineError` is a user/input problem and
maps to exit code 2 on the command line.
"""


class PipelineError(Exception):
    """Base class for recoverable input errors."""


# imgproc
class UnsupportedFormat(PipelineError):
    pass


class CorruptImage(PipelineError):
    pass


class ZeroDimension(PipelineError):
    pass


# augment
class EmptyClass(PipelineError):
    pass


class CountMismatch(PipelineError):
    pass


# dataset
class MissingClassDir(PipelineError):
    pass


class DuplicatePath(PipelineError):
    pass


class ClassTooSmall(PipelineError):
    pass


# model
class ShapeMismatch(PipelineError):
    pass


class LabelOutOfRange(PipelineError):
    pass


class EmptySplit(PipelineError):
    pass


class MissingSample(PipelineError):
    pass


# eval
class LengthMismatch(PipelineError):
    pass


class EmptyMatrix(PipelineError):
    pass


class ZeroN(PipelineError):
    pass


class SingleClass(PipelineError):
    pass


class FoldCountMismatch(PipelineError):
    pass


# scorecam
class NoActivationCapability(PipelineError):
    pass


class LayerNotFound(PipelineError):
    pass


class ClassOutOfRange(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    pass


class LeakageError(RuntimeError):
    """Augmented data reached a validation or test split. Internal bug, not user error."""
