"""Exception types shared across the package.

Validation failures (bad arguments, degenerate inputs) and format/IO
failures are kept as distinct class families so the CLI can map them to
different exit codes.
"""


class ComprobeError(Exception):
    """Base class for all package errors."""


class ConvergenceFailure(ComprobeError):
    """An iterative factorization did not reach tolerance within its cap."""


class ZeroVector(ComprobeError):
    """An operation requiring a nonzero vector received one with zero norm."""


class ZeroLeader(ComprobeError):
    """The largest-magnitude entry of a vector is zero."""


class ZeroMatrix(ComprobeError):
    """An operation requiring a nonzero matrix received an all-zero one."""


class BadOrders(ComprobeError):
    """Norm orders violate a required ordering (e.g. p < q)."""


class DegenerateSpread(ComprobeError):
    """Spread equals 1: the k-th leading entry is zero, bound undefined."""


class NotSquare(ComprobeError):
    """A square matrix was required under the strict shape policy."""


class DimensionMismatch(ComprobeError):
    """Matrix inner dimensions do not compose."""


class ShapeMismatch(ComprobeError):
    """An array does not have the expected shape."""


class NonBinaryLabels(ComprobeError):
    """Labels outside {0,1} / {-1,+1} passed to a binary-task operation."""


class EmptyDataset(ComprobeError):
    """A dataset with zero examples was supplied."""


class BadK(ComprobeError):
    """A retained-count k is outside its valid range."""


class EmptyGrid(ComprobeError):
    """An empty search grid was supplied."""


class BadSpec(ComprobeError):
    """A dataset or config specification is invalid."""


class FormatError(ComprobeError):
    """A serialized file violates its format contract."""
