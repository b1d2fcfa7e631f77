"""Exception types raised across the package.

Everything derives from :class:`HgdError` so callers can catch the
package's failures with a single except clause; most types also derive
from ValueError because they signal bad inputs.
"""

from __future__ import annotations


class HgdError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(HgdError, ValueError):
    """Two operands have incompatible shapes."""


class EmptyInputError(HgdError, ValueError):
    """An operation over a collection received no elements."""


class BadLengthError(HgdError, ValueError):
    """A flat vector length does not correspond to a symmetric matrix side."""


class AsymmetricMatrixError(HgdError, ValueError):
    """A matrix expected to be symmetric is not, beyond rounding noise."""


class NonPositiveEigenvalueError(HgdError, ValueError):
    """A matrix expected to be positive definite has an eigenvalue <= 0."""


class TooFewPixelsError(HgdError, ValueError):
    """A patch holds fewer than two pixels, so no covariance exists."""


class RegionTooSmallError(HgdError, ValueError):
    """A region is smaller than a single patch."""


class EmptyRegionError(HgdError, ValueError):
    """A region summary was requested over zero patches."""


class ZeroVectorError(HgdError, ValueError):
    """Normalization hit a vector (or block) with zero norm."""


class ZeroNormError(HgdError, ValueError):
    """Cosine distance received a zero-norm vector."""


class InconsistentLengthsError(HgdError, ValueError):
    """Concatenation received vectors whose lengths disagree with the layout."""


class NoValidProbesError(HgdError, ValueError):
    """Every probe was excluded by the evaluation protocol."""


class ManifestError(HgdError, ValueError):
    """A dataset manifest is malformed or references missing files."""


class ConfigError(HgdError, ValueError):
    """A configuration file or override is malformed."""


class FormatError(HgdError, ValueError):
    """Base class for binary container problems."""


class BadMagicError(FormatError):
    """A file does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """A file's version or tags are not ones this code can read."""


class VariantMismatchError(VersionMismatchError):
    """A model or descriptor file carries the wrong descriptor variant."""


class ChecksumMismatchError(FormatError):
    """A file's trailing checksum does not match its contents."""
