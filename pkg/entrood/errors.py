from typing import List, Optional


class EntroodError(Exception):
    """ Base class for all the errors raised by entrood.

    Every subclass carries the exit code the command line
    interface returns when the error reaches it.
    """

    exit_code = 1


class ConfigError(EntroodError, ValueError):
    """ Invalid parameters or experiment configuration. """

    exit_code = 2

    def __init__(self, message: str, errors: Optional[List[str]] = None) -> None:
        """ Initialize the error.

        Args:
            message (str): summary message.
            errors (list[str]): every validation problem found, if more
                than one was collected.
        """

        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class DataError(EntroodError, ValueError):
    """ Malformed or mismatched data (dimensions, measures, files). """

    exit_code = 3


class NumericalError(EntroodError, ArithmeticError):
    """ A numerical procedure failed (non-SPD matrices, collapsed fits). """

    exit_code = 4


class UnavailableError(EntroodError, NotImplementedError):
    """ No closed form exists for the requested quantity. """

    exit_code = 4


class ExperimentError(EntroodError):
    """ An experiment stage failed. Wraps the original cause. """

    def __init__(self, stage: str, cause: BaseException) -> None:
        """ Initialize the error.

        Args:
            stage (str): name of the failing stage.
            cause (Exception): the underlying error.
        """

        super().__init__("Stage '{}' failed: {}".format(stage, cause))
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
