"""Exception hierarchy.

Everything raised on bad input derives from :class:`DataError` (CLI exit
code 3); numeric failures such as divergence derive from
:class:`NumericFailure` (exit code 4).
"""

from __future__ import annotations


class BeanSplitError(Exception):
    """Base class for all package errors."""


class DataError(BeanSplitError, ValueError):
    """Input data violates a documented contract."""


class NumericFailure(BeanSplitError, ArithmeticError):
    """A numerical procedure produced an unusable result."""


# raster I/O
class MalformedHeader(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class UnknownClassCode(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# manifest
class ManifestError(DataError):
    pass


class MissingColumn(ManifestError):
    pass


class InvalidRetortTime(ManifestError):
    pass


class MissingLabel(ManifestError):
    pass


class DuplicateImage(ManifestError):
    pass


class EmptyPartition(DataError):
    pass


# network
class ChannelMismatch(DataError):
    pass


class OddDimensions(DataError):
    pass


class DimensionNotDivisible(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyLoss(DataError):
    pass


class NonFiniteLoss(NumericFailure):
    pass


# weight files
class WeightFileError(DataError):
    pass


class BadMagic(WeightFileError):
    pass


class UnsupportedVersion(WeightFileError):
    pass


class LengthMismatch(WeightFileError):
    """Byte or element counts disagree (weight payloads, paired series)."""


# measures / metrics
class NoBeanPixels(DataError):
    pass


class InvalidParameter(DataError):
    pass


class BinCountMismatch(DataError):
    pass


class NoPositives(DataError):
    pass


class EmptyUnion(DataError):
    pass


class ZeroTruth(DataError):
    pass


class EmptySet(DataError):
    pass


class SingleClass(DataError):
    pass


# statistics
class UndefinedCorrelation(DataError):
    pass


class UnbalancedDesign(DataError):
    pass


class InsufficientReplication(DataError):
    pass


class ZeroVariance(DataError):
    pass
