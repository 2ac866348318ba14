"""Exception hierarchy.

Everything raised on purpose derives from :class:`ClsPruneError`.  The CLI
maps these to exit code 2 (data/format problems); argument errors are exit 1.
"""


class ClsPruneError(Exception):
    """Base class for all package errors."""


class InvalidInput(ClsPruneError, ValueError):
    pass


class DegenerateVariance(ClsPruneError, ValueError):
    """A correlation was requested on a constant sequence."""


# trace container
class IoError(ClsPruneError, OSError):
    pass


class FormatError(ClsPruneError, ValueError):
    pass


class UnsupportedVersion(FormatError):
    pass


class CorruptPayload(FormatError):
    pass


class RangeError(FormatError):
    pass


# scoring
class InvalidLayer(ClsPruneError, IndexError):
    pass


class InvalidK(ClsPruneError, ValueError):
    pass


class InvalidTrace(ClsPruneError, ValueError):
    pass


class RoleError(InvalidTrace):
    """Encoder trace given where a decoder trace was expected, or vice versa."""


class NoOutputTokens(InvalidTrace):
    pass


# selection / diagnostics
class InvalidBudget(ClsPruneError, ValueError):
    pass


class SelectionMismatch(ClsPruneError, IndexError):
    pass


class InvalidComparison(ClsPruneError, ValueError):
    pass


class TraceMismatch(ClsPruneError, ValueError):
    pass


class InvalidConfig(ClsPruneError, ValueError):
    pass
