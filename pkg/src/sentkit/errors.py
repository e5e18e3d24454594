"""Exception taxonomy for sentkit.

Every operation raises one of these instead of bare ValueError so that the
CLI can map failures onto exit codes (validation vs. stage errors) without
string matching.
"""


class SentkitError(Exception):
    """Base class for all toolkit errors."""


# --- input validation -------------------------------------------------------

class ValidationError(SentkitError):
    """Bad inputs detected before any computation ran (CLI exit code 2)."""


class SeriesTooShort(ValidationError):
    pass


class DegenerateSeries(ValidationError):
    pass


class HorizonTooLong(ValidationError):
    pass


class MisalignedIndex(ValidationError):
    pass


class InsufficientOverlap(ValidationError):
    pass


class SchemaViolation(ValidationError):
    pass


class NonMonotoneDates(SchemaViolation):
    pass


class MissingColumn(SchemaViolation):
    pass


# --- structural models ------------------------------------------------------

class InvalidRho(ValidationError):
    pass


class NonstationaryRho(ValidationError):
    pass


class NoFiniteThreshold(SentkitError):
    pass


class Infeasible(SentkitError):
    """No market-clearing regime exists; carries the constraint report."""

    def __init__(self, message, constraints=None):
        super().__init__(message)
        self.constraints = constraints or {}


class DegenerateStates(ValidationError):
    pass


class MissingVariance(ValidationError):
    pass


# --- regression / fitting ---------------------------------------------------

class RankDeficient(SentkitError):
    pass


class LagNegative(ValidationError):
    pass


class WindowTooLong(ValidationError):
    pass


class SingularWeighting(SentkitError):
    """Raised only when even the diagonal fallback is unusable."""


# --- resampling -------------------------------------------------------------

class BlockTooLong(ValidationError):
    pass


class NotPSD(SentkitError):
    pass


class DrawOutOfRange(ValidationError):
    pass


class PvalOutOfRange(ValidationError):
    pass


class TooFewClusters(ValidationError):
    pass


class TooFewFirms(ValidationError):
    pass


class EmptyBin(ValidationError):
    pass


# --- panel ------------------------------------------------------------------

class NoWithinVariation(SentkitError):
    pass


class SingularDesign(SentkitError):
    pass


# --- portfolio --------------------------------------------------------------

class TooFewInUniverse(ValidationError):
    pass


class MissingSignal(ValidationError):
    pass


class EmptyEndBucket(SentkitError):
    pass


# --- pipeline ---------------------------------------------------------------

class StageDependencyMissing(ValidationError):
    pass


class MissingUpstream(ValidationError):
    pass


class StageError(SentkitError):
    """Wraps an error raised inside a pipeline stage with the stage tag."""

    def __init__(self, stage, original):
        super().__init__(f"stage '{stage}' failed: {original}")
        self.stage = stage
        self.original = original
