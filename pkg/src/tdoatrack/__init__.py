"""Moving-node localization in wireless sensor networks.

Simulation of TDOA (plus TOA, RSS, DOA) measurements, a piecewise
constant-velocity mobility model, four recursive estimators (EKF, UKF,
generic particle filter, control-aware PF-TDOA), residual and systematic
resampling, and a seeded Monte Carlo benchmarking harness.
"""

from .filters import (
    FILTER_KINDS,
    ExtendedKalmanFilter,
    FilterConfig,
    FilterEstimate,
    ParticleFilter,
    UnscentedKalmanFilter,
    make_filter,
)
from .harness import (
    LsSolution,
    RmseReport,
    RoundResult,
    StepRecord,
    derive_round_seed,
    ls_tdoa_solve,
    place_anchors,
    run_experiment,
    run_round,
    sweep,
)
from .measurement import (
    SPEED_OF_LIGHT,
    AnchorSet,
    DoaMeasurement,
    RssMeasurement,
    TdoaMeasurement,
    ToaMeasurement,
    generate_doa,
    generate_rss,
    generate_tdoa,
    generate_toa,
    range_difference_jacobian,
    range_differences,
    reduce_tdoa,
    tdoa_noise_covariance,
    true_distance,
    wrap_angle,
)
from .mobility import (
    MobilityConfig,
    NodeState,
    Trajectory,
    generate_trajectory,
    propagate,
    sample_velocity,
)
from .resampling import (
    effective_sample_size,
    multinomial_resample,
    residual_resample,
    systematic_resample,
)
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    apply_overrides,
    config_hash,
    dump_scenario,
    load_scenario,
    parse_scenario,
)

__version__ = "0.1.0"
