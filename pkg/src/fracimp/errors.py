"""Exception hierarchy shared across the toolkit."""


class FracimpError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(FracimpError):
    """Malformed configuration, CSV, or metadata input."""


class NumericsError(FracimpError):
    """Numerical failure: poles, degenerate decompositions, lost normalization."""
