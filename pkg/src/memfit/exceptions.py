"""Exception types, grouped by the CLI exit code they map to."""


class MemfitError(Exception):
    """Base class for all library errors."""


class FormulaError(MemfitError):
    """Malformed model formula."""


class SpecError(MemfitError):
    """Invalid model specification (validation failures, bad priors, bad config values)."""


class DataFormatError(MemfitError):
    """Malformed CSV input (ragged rows, bad cells, duplicate headers)."""


class NumericalError(MemfitError):
    """Numerical failure during sampling (singular block, non-finite state)."""


class InsufficientDraws(MemfitError):
    """Too few retained draws for the requested diagnostic."""
