"""Exception hierarchy shared by every lethevit module.

Errors are split along the CLI exit-code boundary: ConfigError and its
subclasses signal bad user input (exit 2), everything else under
LetheError signals a runtime failure (exit 1).
"""


class LetheError(Exception):
    """Base class for all lethevit errors."""


class ConfigError(LetheError):
    """Invalid configuration value or missing config key."""


class DimensionError(LetheError):
    """Tensor shapes incompatible with the requested operation."""


class LabelError(LetheError):
    """Class label outside the valid range."""


class ContractError(LetheError):
    """An operation precondition was violated (e.g. non-scalar loss)."""


class DegenerateVectorError(LetheError):
    """Cosine similarity requested for a (near-)zero-norm vector."""


class NonFiniteError(LetheError):
    """A NaN or Inf appeared at an operation boundary."""


class DivergenceError(LetheError):
    """Training produced a non-finite loss; names the phase and step."""

    def __init__(self, phase: str, step: int, detail: str = ""):
        self.phase = phase
        self.step = step
        msg = f"non-finite loss in phase '{phase}' at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class FormatError(LetheError):
    """A persisted file failed validation; names the byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")
