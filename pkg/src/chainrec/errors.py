"""Exception types raised across the toolkit."""


class ChainrecError(Exception):
    """Base class; the CLI turns any of these into an error record."""


class ArgumentError(ChainrecError, ValueError):
    pass


class ResolutionTooFineError(ChainrecError):
    pass


class DomainMismatchError(ChainrecError):
    pass


class MetricInvalidError(ChainrecError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InvalidSystemError(ChainrecError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class CutoffTooLargeError(ChainrecError):
    pass


class StateOverflowError(ChainrecError):
    pass


class ConfigError(ChainrecError):
    pass
