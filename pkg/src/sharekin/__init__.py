"""Urn model of product shares with occupation-squared transfer rates.

A fixed pool of M indivisible units lives on N sites; a unit hops from
site p to site q at rate (m_p m_q)^b / S with S the total weight, except
that a site holding a single unit never gives it away.  At b = 2 the
stationary state of this process reproduces the heavy-tailed, slowly
drifting share distributions seen in product-level trade panels, and the
package bundles the full workflow around that observation:

- model:           counts, shares, transfer rates (model-core primitives)
- engine:          exact continuous-time simulation via thinning, replicas
- stationary:      factorized measure, exact small-system solver, phase
                   diagram, saddle-point asymptotics, scaling collapses
- empirics:        trade-flow ingestion, fluctuation scaling, calibration
- predictability:  rank-based forecast scoring and significance thresholds
- cli:             file-based workflows (simulate | stationary | calibrate
                   | ingest | predict)
"""

from .errors import CapacityError, DataError, SharekinError
from .model import (
    Configuration,
    ModelParams,
    ShareVector,
    discretize_shares,
    shares_of,
    site_weight,
    total_exit_rate,
    transfer_rate,
)
from .rng import Xoshiro256pp, derive_seed, splitmix64_next
from .engine import (
    DELTA_T_TILDE_DEFAULT,
    EnsembleResult,
    Histogram,
    SimConfig,
    Trajectory,
    dwell_state_distribution,
    occupancy_profile,
    run_ensemble,
    run_replica,
    share_histogram,
    simulated_growth_rates,
    step,
    uniform_counts,
)
from .stationary import (
    CollapseResult,
    PartitionTable,
    Phase,
    PhasePoint,
    StationaryProfile,
    asymptotic_site_distribution,
    chemical_potential,
    classify_phase,
    critical_density,
    exact_ctmc_stationary,
    exact_site_distribution,
    partition_dp,
    phi,
    polylog,
    scaling_collapse,
    total_variation,
    zeta,
)
from .empirics import (
    CalibrationResult,
    LognormalFit,
    RhoCandidate,
    ScalingFit,
    SecondMomentSeries,
    SharePanel,
    TradeFlowRecord,
    annual_variations,
    compute_shares,
    delta_t_from_c,
    filter_consistent_panel,
    fit_density,
    fit_fluctuation_scaling,
    fit_lognormal,
    read_panel_csv,
    read_tradeflow_csv,
    second_moment_series,
    synthetic_panel,
    write_panel_csv,
    write_tradeflow_csv,
)
from .predictability import (
    PredictabilityReport,
    build_report,
    critical_U,
    excess_growth,
    growth_rates,
    unpredictability,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult",
    "CapacityError",
    "CollapseResult",
    "Configuration",
    "DELTA_T_TILDE_DEFAULT",
    "DataError",
    "EnsembleResult",
    "Histogram",
    "LognormalFit",
    "ModelParams",
    "PartitionTable",
    "Phase",
    "PhasePoint",
    "PredictabilityReport",
    "RhoCandidate",
    "ScalingFit",
    "SecondMomentSeries",
    "SharePanel",
    "ShareVector",
    "SharekinError",
    "SimConfig",
    "StationaryProfile",
    "TradeFlowRecord",
    "Trajectory",
    "Xoshiro256pp",
    "annual_variations",
    "asymptotic_site_distribution",
    "build_report",
    "chemical_potential",
    "classify_phase",
    "compute_shares",
    "critical_U",
    "critical_density",
    "delta_t_from_c",
    "derive_seed",
    "discretize_shares",
    "dwell_state_distribution",
    "exact_ctmc_stationary",
    "exact_site_distribution",
    "excess_growth",
    "filter_consistent_panel",
    "fit_density",
    "fit_fluctuation_scaling",
    "fit_lognormal",
    "growth_rates",
    "occupancy_profile",
    "partition_dp",
    "phi",
    "polylog",
    "read_panel_csv",
    "read_tradeflow_csv",
    "run_ensemble",
    "run_replica",
    "scaling_collapse",
    "second_moment_series",
    "share_histogram",
    "shares_of",
    "simulated_growth_rates",
    "site_weight",
    "splitmix64_next",
    "step",
    "synthetic_panel",
    "total_exit_rate",
    "total_variation",
    "transfer_rate",
    "uniform_counts",
    "unpredictability",
    "write_panel_csv",
    "write_tradeflow_csv",
    "zeta",
]
