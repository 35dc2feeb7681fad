"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GsmPruneError(Exception):
    exit_code = 1


class ConfigError(GsmPruneError):
    exit_code = 1


class ParameterError(ConfigError, ValueError):
    """Invalid distribution or hyperparameter values."""


class ShapeError(GsmPruneError, ValueError):
    exit_code = 2


class NumericError(GsmPruneError, ArithmeticError):
    exit_code = 2


class TrainingDiverged(NumericError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) in epoch {epoch}")


class SamplerDiverged(NumericError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"SGLD produced a non-finite update at step {step}")


class UnsupportedTask(GsmPruneError, ValueError):
    exit_code = 1


class FormatError(GsmPruneError, ValueError):
    exit_code = 3


class ConsistencyError(FormatError):
    """Network and moments (or other paired artifacts) do not line up."""


class VerificationFailed(GsmPruneError):
    exit_code = 4
