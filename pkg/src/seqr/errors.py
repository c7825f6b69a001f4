"""Exception hierarchy shared by every module."""


class SeqrError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SeqrError, ValueError):
    pass


class NonFiniteError(SeqrError, ValueError):
    pass


class ConfigurationError(SeqrError, ValueError):
    """Raised when an operation is used with an unsupported library layout,
    e.g. QR routing requested for adapters that do not share ``A``."""


class DegenerateAdapterError(SeqrError, ValueError):
    pass


class ContainerError(SeqrError, IOError):
    """Base class for library container load failures."""


class MagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class TruncationError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class LayoutError(ContainerError):
    """Header fields disagree with each other or with the payload."""
