"""Exception hierarchy shared by every module."""


class IBMHTError(Exception):
    """Base class for all errors raised by ibmht."""


class NegativeMass(IBMHTError, ValueError):
    pass


class NotNormalized(IBMHTError, ValueError):
    pass


class DegenerateAlphabet(IBMHTError, ValueError):
    pass


class OutOfRange(IBMHTError, ValueError):
    pass


class DimensionMismatch(IBMHTError, ValueError):
    pass


class NonFinite(IBMHTError, ArithmeticError):
    """A solver produced NaN or infinite values."""


class EmptyHistogram(IBMHTError, ValueError):
    pass


class EmptyInput(IBMHTError, ValueError):
    pass


class MissingPValue(IBMHTError, ValueError):
    pass


class NotANull(IBMHTError, ValueError):
    """The encoder under test does not satisfy the null hypothesis I(T;Y) < alpha."""


class ConfigError(IBMHTError, ValueError):
    """A run configuration is missing a field or has an invalid value."""


class SchemaError(IBMHTError, ValueError):
    """An input file does not match its expected layout."""
