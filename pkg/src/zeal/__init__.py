"""Locally differentially private collection of doubles, built so the
privatized dataset is cheaper to transmit and compress than the original."""

from .aggregate import (
    BoundCheckRow,
    ErrorReport,
    avg_star,
    bernstein_bound_abs,
    bernstein_bound_rel,
    default_lambda_grid,
    empirical_bound_check,
    error_metrics,
    relative_expectation_error,
    sum_variances,
)
from .audit import (
    AuditVerdict,
    ReachabilityWindow,
    Witness,
    collect_windows,
    find_witness,
    reachable,
    scan_window,
    slope_condition,
)
from .codec import WireFrame, decode, encode, from_bytes, shared_prefix, to_bytes
from .compressmeter import (
    CompressionReport,
    compression_ratio,
    measure,
    surrogate_compress,
)
from .fpbits import (
    FloatAnatomy,
    SharedBitProfile,
    decompose,
    exponent_region,
    recompose,
    shared_bits,
    ulp,
)
from .mechanism import (
    Breakpoints,
    MechanismParams,
    PrivatizedDataset,
    analytic_mean,
    analytic_variance,
    breakpoints,
    cdf,
    derive_params,
    inverse_cdf,
    pdf,
    perturb,
    perturb_dataset,
    uniform_stream,
)
from .planner import (
    AbarPlan,
    abar_for,
    ceil_log2,
    enclosing_exponent,
    finite_precision_estimate,
    gamma_min,
    plan,
    plan_from_text,
    rebuild_plan,
    transmission_ratio,
    vulnerability_exponent,
)

__version__ = "0.1.0"
