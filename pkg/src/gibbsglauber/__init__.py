"""Birth-death sampling for Gibbs point processes with repulsive finite-range
pair potentials, plus exact 1D oracles and statistical validation suites."""

__version__ = "0.1.0"

from .core import (
    Configuration,
    Domain,
    HardSphere,
    SoftCore,
    SpatialGrid,
    birth_acceptance,
    delta_energy,
    uniform_point,
)
from .dynamics import (
    EventTrace,
    GlauberParams,
    RunResult,
    default_gamma,
    low_activity_gap,
    plan_time,
    run,
    run_many,
)
from .oracle import (
    IntervalActivity,
    TonksModel,
    mc_partition,
    one_point_density,
    restricted_partition,
    tonks_card_pmf,
    tonks_mean_count,
    tonks_partition,
    tonks_pmf_vector,
    tonks_sample,
)
from .canonical import CanonicalParams, canonical_sample, estimate_mean_count, sweep_count
from .localization import (
    PinnedTiltedMeasure,
    martingale_check,
    simulate_pinning,
    tilde_intensity,
    variance_conservation_check,
)
from .validation import (
    IdentityReport,
    SampleBatch,
    cardinality_ratio_check,
    domination_check,
    gnz_residual,
    influence_estimate,
    relaxation_time,
    survivor_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
