"""Exception types shared across the package."""


class LatdecError(Exception):
    """Base class for all package errors."""


class StructuralError(LatdecError):
    """A lattice invariant was violated or a node reference is invalid."""


class ParseError(LatdecError):
    """Serialized input could not be parsed; the message carries a location."""


class BudgetExhausted(LatdecError):
    """The model-call budget ran out. Search loops treat this as termination."""


class ModelError(LatdecError):
    """A scoring model failed (bad table lookup, bridge transport, protocol)."""

    def __init__(self, message: str, payload=None):
        super().__init__(message)
        self.payload = payload


class ConfigError(LatdecError):
    """Invalid run or search configuration."""
