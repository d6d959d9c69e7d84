"""Exception types shared across the toolkit."""


class SeqlabError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SeqlabError):
    """Shapes or lengths of operands do not line up."""


class FormatError(SeqlabError):
    """A text input (CoNLL file, results file) is malformed."""


class ModelFileError(SeqlabError):
    """A binary model or embedding file is unreadable or corrupt."""
