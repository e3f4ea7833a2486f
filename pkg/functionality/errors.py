"""Categorized pipeline errors.

Every error carries the process exit status the CLI should return, the way a web handler
carries an HTTP status. Library code raises; only ``main.run_subcommand`` turns them into
exit codes.
"""


class PipelineError(Exception):
    exit_code = 1
    category = "pipeline"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(PipelineError):
    exit_code = 2
    category = "config"


class MissingArtifactError(PipelineError):
    category = "missing-artifact"

    def __init__(self, path, stage: str | None = None, hint: str | None = None):
        if stage:
            detail = f"Missing input artifact {path}; run `{stage}` first."
        else:
            detail = f"Missing input file {path}; {hint or 'check the data directory'}."
        super().__init__(detail)
        self.path = str(path)
        self.stage = stage


# wfdb ingestion

class HeaderParseError(PipelineError):
    category = "parse"

    def __init__(self, detail: str, line_number: int):
        super().__init__(f"line {line_number}: {detail}")
        self.line_number = line_number


class UnsupportedFormatError(PipelineError):
    category = "unsupported-format"


class TruncatedSignalError(PipelineError):
    category = "parse"

    def __init__(self, expected: int, actual: int):
        super().__init__(f"Signal file truncated: expected {expected} bytes, got {actual}.")
        self.expected = expected
        self.actual = actual


class AnnotationParseError(PipelineError):
    category = "parse"

    def __init__(self, detail: str, offset: int):
        super().__init__(f"byte offset {offset}: {detail}")
        self.offset = offset


class InsufficientClassError(PipelineError):
    category = "dataset"


# signal processing

class SignalTooShortError(PipelineError):
    category = "signal"


class InvalidLevelError(PipelineError):
    category = "signal"


class FiducialOrderError(PipelineError):
    category = "features"


class ZeroVarianceFeatureError(PipelineError):
    category = "features"

    def __init__(self, feature: str):
        super().__init__(f"Feature '{feature}' has zero standard deviation on the training split.")
        self.feature = feature


# network

class ShapeMismatchError(PipelineError):
    category = "model"


class NonFiniteActivationError(PipelineError):
    category = "model"


class InvalidLabelError(PipelineError):
    category = "model"


class TrainingDivergedError(PipelineError):
    category = "training"

    def __init__(self, epoch: int, iteration: int, loss: float):
        super().__init__(f"Loss became non-finite ({loss}) at epoch {epoch}, iteration {iteration}.")
        self.epoch = epoch
        self.iteration = iteration
        self.loss = loss


class ModelFormatError(PipelineError):
    category = "model-file"


# quantization

class QuantizationOverflowError(PipelineError):
    category = "quantize"

    def __init__(self, tensors: list[str]):
        super().__init__(f"Tensors overflow half precision: {', '.join(tensors)}")
        self.tensors = tensors


class SchemeMismatchError(PipelineError):
    category = "quantize"


class EmptyCalibrationError(PipelineError):
    category = "quantize"


# evaluation

class LengthMismatchError(PipelineError):
    category = "evaluate"
