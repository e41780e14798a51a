"""Exceptions raised by squaremamba.

Errors caused by user input (files, flags, checkpoints) derive from
:py:class:`InputError` so that the command line can map them to exit code 2.
"""


class SquareMambaError(Exception):
    """Base class of all squaremamba errors"""


class InputError(SquareMambaError):
    """Invalid user input: data files, configuration files or checkpoints"""


class ParseError(InputError):
    """A row of an input file could not be parsed"""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(InputError):
    """An input file does not follow the expected header"""


class ValidationError(InputError):
    """Input is well-formed but violates a data contract"""


class VersionError(InputError):
    """Checkpoint and sample cache were produced with different layouts"""


class DimensionError(SquareMambaError, ValueError):
    """Tensor shapes are incompatible with an operation"""


class ConfigurationError(SquareMambaError, ValueError):
    """Unknown option or out-of-range hyperparameter"""


class BatchError(SquareMambaError, ValueError):
    """Batch too small for the requested operation"""


class UsageError(SquareMambaError, ValueError):
    """An API was called outside of its contract"""


class CategoryRangeError(SquareMambaError, ValueError):
    """A drought index lies outside [-3, 3]"""


class NonFiniteError(SquareMambaError, FloatingPointError):
    """An operation produced NaN or infinite values"""


class NonFiniteGradientError(NonFiniteError):
    """An optimizer step received non-finite gradients"""

    def __init__(self, names):
        self.names = list(names)
        super().__init__(
            f"non-finite gradient for {len(self.names)} parameter(s): "
            + ", ".join(self.names)
        )


class DivergenceError(SquareMambaError, RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, message, checkpoint=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch
