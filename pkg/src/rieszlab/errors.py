"""Exception hierarchy shared by all modules."""


class RieszLabError(Exception):
    """Base class for library errors."""


class InvalidArgument(RieszLabError, ValueError):
    pass


class OutOfRange(RieszLabError, IndexError):
    pass


class SurgeryFailure(RieszLabError):
    """Gluing produced an invalid (e.g. disconnected) manifold."""


class ResourceLimit(RieszLabError):
    pass


class InternalError(RieszLabError):
    pass


class DataError(RieszLabError):
    """Malformed interchange file or config."""
