"""Exception hierarchy shared by all zeal modules.

``ZealError`` is the common base. ``ZealDataError`` groups the errors that
signal bad *data* (as opposed to a bad configuration), which the CLI maps
to its domain/feasibility exit code.
"""


class ZealError(Exception):
    """Base class for all zeal errors."""


class ZealDataError(ZealError):
    """Input data violates a precondition (domain, feasibility, emptiness)."""


# --- bit-level / float anatomy ---------------------------------------------

class NonFiniteInput(ZealDataError):
    """NaN or infinity where a finite double is required."""


class SubnormalInput(ZealDataError):
    """Subnormal (or zero) magnitude where a normal double is required."""


class NonPositiveInput(ZealDataError):
    """Zero or negative value where a positive one is required."""


class EmptyDataset(ZealDataError):
    """An operation received no samples."""


# --- mechanism parameters ---------------------------------------------------

class InvalidEpsilon(ZealError):
    """Privacy budget must be a finite positive real."""


class InvalidRange(ZealError):
    """Half-range must be a finite positive real."""


class OverflowingBias(ZealError):
    """The requested bias pushes the output bounds outside finite doubles."""


class OutOfDomain(ZealDataError):
    """A reading lies outside the feasible interval [center-h, center+h]."""


class InvalidProbability(ZealDataError):
    """Cumulative probability must lie in [0, 1)."""


# --- bias planning -----------------------------------------------------------

class ExponentTooSmall(ZealError):
    """Target exponent region cannot enclose the output interval."""


class ExponentTooSmallForIEEE(ZealError):
    """Target exponent region is below the normal double range."""


class NoFeasibleExponent(ZealError):
    """No exponent satisfies both the reachability and precision limits."""


class ZeroDenominator(ZealError):
    """Both endpoints of the precision estimate have zero denominators."""


class InvalidPlan(ZealError):
    """A bias plan is internally inconsistent."""


# --- aggregation -------------------------------------------------------------

class ZeroTrueAverage(ZealDataError):
    """Relative error metrics are undefined when the true average is zero."""


class ZeroSum(ZealDataError):
    """The relative probability bound is undefined when the sample sum is zero."""


# --- audit -------------------------------------------------------------------

class WindowTooLarge(ZealError):
    """Requested reachability scan exceeds the desk-scale cap."""


# --- codec -------------------------------------------------------------------

class SampleOutsidePlan(ZealDataError):
    """A sample's guaranteed-shared prefix does not match the plan."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"sample {index} does not carry the plan's shared prefix")


class CorruptFrame(ZealError):
    """A wire frame failed structural or self-consistency checks."""


# --- CLI / ingestion ----------------------------------------------------------

class ConfigError(ZealError):
    """Invalid experiment configuration."""


class NonNumericCell(ZealDataError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"row {row}: cell is not numeric")


class OutOfFeasible(ZealDataError):
    """A CSV value lies outside the declared feasible interval."""

    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"row {row}: value outside the declared feasible interval")
