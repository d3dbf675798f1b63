"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto process exit codes, so each class carries the code
it should produce.
"""


class CtxSenseError(Exception):
    """Base class for all errors raised by ctxsense."""

    exit_code = 1


class PreconditionError(CtxSenseError, ValueError):
    """An argument violates the documented precondition of an operation."""

    exit_code = 2


class FormatError(CtxSenseError):
    """A log file has an unreadable header or an unsupported version tag."""

    exit_code = 2


class CorruptInputError(CtxSenseError):
    """A log file is empty or has too many malformed rows."""

    exit_code = 2


class ScriptValidationError(CtxSenseError):
    """A scenario script contains an impossible behaviour transition."""

    exit_code = 2


class SchemaError(CtxSenseError):
    """Feature vectors or model sections do not share the expected schema."""

    exit_code = 3


class ModelFormatError(CtxSenseError):
    """A model file is malformed or carries an unknown version tag."""

    exit_code = 3


class ConfigurationError(CtxSenseError):
    """A required model or setting is missing."""

    exit_code = 3


class TrainingError(CtxSenseError):
    """Training data does not cover the categories the model needs."""

    exit_code = 3


class ConvergenceError(CtxSenseError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        The optimality residual at the last iterate (KKT gap for the SVM
        solver, gradient norm for the sigmoid fit).
    """

    exit_code = 3

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DegenerateStateError(CtxSenseError):
    """A filter state collapsed to zero mass."""

    exit_code = 3


class AlignmentError(CtxSenseError):
    """Two time-indexed streams cannot be matched within tolerance."""

    exit_code = 4
