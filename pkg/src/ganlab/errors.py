"""Exception hierarchy shared by all ganlab modules."""


class GanlabError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GanlabError):
    """Shapes or axes are incompatible; message names the offending shapes."""


class DomainError(GanlabError):
    """A value is outside an operation's mathematical domain (e.g. log of <= 0)."""


class NumericError(GanlabError):
    """A computation produced NaN/Inf from finite inputs, or was fed a non-finite value."""


class ContractError(GanlabError):
    """A documented precondition was violated by the caller."""


class ConfigError(GanlabError):
    """A configuration value is invalid or unsupported."""


class IntegrityError(GanlabError):
    """Stored data fails an internal consistency check (counts, fingerprints)."""


class FormatError(GanlabError):
    """A file could not be parsed; message includes the byte offset where parsing failed."""


class TrainingAborted(GanlabError):
    """A training or search step hit a non-finite loss; carries a diagnostic payload."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
