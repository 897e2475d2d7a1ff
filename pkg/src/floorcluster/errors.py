"""Exception hierarchy. Every failure raised by the package derives from ``FloorClusterError``."""

from __future__ import annotations


class FloorClusterError(Exception):
    """Base class for all typed errors."""


class InvalidDatabase(FloorClusterError, ValueError):
    pass


class LengthMismatch(FloorClusterError, ValueError):
    pass


class NoCoverage(FloorClusterError):
    """No usable reading in an observation for the requested estimator."""


class AllApsUnknown(NoCoverage):
    """None of the observed APs exist in the registry."""


class ZeroWeightSum(FloorClusterError, ArithmeticError):
    pass


class KTooLarge(FloorClusterError, ValueError):
    pass


class EmptyCampaign(FloorClusterError):
    pass


class EmptyTestSet(FloorClusterError, ValueError):
    pass


class UnknownMethod(FloorClusterError, ValueError):
    pass


class BuildingMismatch(FloorClusterError, ValueError):
    pass


class FormatError(FloorClusterError):
    """Base for file-format failures."""


class Malformed(FormatError):
    def __init__(self, line: int | None, reason: str):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class VersionUnsupported(FormatError):
    pass


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass
