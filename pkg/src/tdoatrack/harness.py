"""Experiment loop: scenario assembly, Monte Carlo rounds, RMSE scoring.

One round generates a trajectory and a TDOA measurement sequence, runs a
filter through predict/update cycles, and scores the root mean square of
the per-step position errors. Experiments aggregate many independent
rounds; sweeps repeat an experiment while varying one parameter under
paired seeds.

Seed discipline: every round derives its own seed from (master seed,
round index) through ``numpy.random.SeedSequence``, then splits it into
three independent streams for trajectory, measurement noise, and filter
randomness. Ground truth therefore stays identical across filter kinds
and across particle counts, which makes paired comparisons valid, and
rounds are embarrassingly parallel with results reduced by round index.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .filters import FILTER_KINDS, make_filter
from .measurement import (
    AnchorSet,
    TdoaMeasurement,
    generate_tdoa,
    range_difference_jacobian,
    range_differences,
    tdoa_noise_covariance,
)
from .mobility import generate_trajectory
from .scenario import ScenarioConfig, ScenarioError, config_hash, resolved_items

__all__ = [
    "StepRecord",
    "RoundResult",
    "RmseReport",
    "LsSolution",
    "place_anchors",
    "ls_tdoa_solve",
    "derive_round_seed",
    "run_round",
    "run_experiment",
    "sweep",
    "SWEEP_PARAMETERS",
]


@dataclass(frozen=True)
class StepRecord:
    """One predict/update cycle of a round's trace."""

    step: int
    true_x: float
    true_y: float
    est_x: float
    est_y: float
    err: float
    n_eff: float | None
    resampled: bool | None
    degenerate: bool


@dataclass(frozen=True)
class RoundResult:
    """Per-step errors and summary of a single simulated round."""

    filter_kind: str
    round_seed: int
    errors: np.ndarray
    rmse: float
    trace: tuple[StepRecord, ...]
    degenerate_steps: int

    def __post_init__(self):
        e = np.array(self.errors, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "errors", e)
        object.__setattr__(self, "trace", tuple(self.trace))


@dataclass(frozen=True)
class RmseReport:
    """Mean and variance of per-round RMSE for one filter kind.

    ``variance`` uses the unbiased (n-1) estimator; a single-round report
    carries variance 0 with ``degenerate_variance`` set.
    """

    filter_kind: str
    rmse_per_round: np.ndarray
    mean: float
    variance: float
    rounds: int
    seed: int
    config_hash: str
    config_items: tuple[tuple[str, str], ...]
    degenerate_variance: bool
    degenerate_steps: int

    def __post_init__(self):
        r = np.array(self.rmse_per_round, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "rmse_per_round", r)
        object.__setattr__(self, "config_items", tuple(self.config_items))

    def confidence_interval(self, level: float = 0.95) -> tuple[float, float]:
        """Two-sided CI for the mean RMSE (Student t)."""
        if self.rounds < 2:
            return self.mean, self.mean
        half = scipy.stats.t.ppf(0.5 + level / 2.0, self.rounds - 1) * math.sqrt(
            self.variance / self.rounds
        )
        return self.mean - half, self.mean + half

    def to_dict(self) -> dict:
        low, high = self.confidence_interval()
        return {
            "filter": self.filter_kind,
            "mean": self.mean,
            "variance": self.variance,
            "rounds": self.rounds,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "ci95_low": low,
            "ci95_high": high,
            "degenerate_variance": self.degenerate_variance,
            "degenerate_steps": self.degenerate_steps,
            "rmse_per_round": [float(v) for v in self.rmse_per_round],
            "config": {k: v for k, v in self.config_items},
        }


@dataclass(frozen=True)
class LsSolution:
    """Gauss-Newton output: last iterate plus a convergence flag."""

    position: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float

    def __post_init__(self):
        p = np.array(self.position, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


def place_anchors(count: int, pattern: str = "circle",
                  region=(0.0, 0.0, 100.0, 100.0), reference_index: int = 0,
                  positions=None) -> AnchorSet:
    """Deterministic anchor deployment inside a rectangular region.

    ``circle`` spaces the anchors evenly on the region's inscribed circle
    (first anchor at angle 0); ``grid`` fills a near-square lattice that
    spans the region including its edges; ``manual`` takes explicit
    ``positions``.
    """
    if count < 3:
        raise ValueError(f"need at least 3 anchors, got {count}")
    xmin, ymin, xmax, ymax = (float(v) for v in region)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"region must have positive area, got {region}")
    if pattern == "manual":
        if positions is None:
            raise ValueError("pattern='manual' requires explicit positions")
        pts = np.asarray(positions, dtype=float)
        if pts.shape != (count, 2):
            raise ValueError(f"expected {count} positions, got shape {pts.shape}")
    elif pattern == "circle":
        center = np.array([(xmin + xmax) / 2.0, (ymin + ymax) / 2.0])
        radius = min(xmax - xmin, ymax - ymin) / 2.0
        angles = 2.0 * np.pi * np.arange(count) / count
        pts = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    elif pattern == "grid":
        cols = math.ceil(math.sqrt(count))
        rows = math.ceil(count / cols)
        xs = np.linspace(xmin, xmax, cols)
        ys = np.linspace(ymin, ymax, rows)
        pts = np.array([(x, y) for y in ys for x in xs][:count])
    else:
        raise ValueError(f"unknown anchor pattern {pattern!r}")
    return AnchorSet(positions=pts, reference_index=reference_index)


def ls_tdoa_solve(measurement: TdoaMeasurement, anchors: AnchorSet,
                  initial_guess, *, weighted: bool = False,
                  max_iterations: int = 100, step_tol: float = 1e-9,
                  residual_tol: float = 1e-6) -> LsSolution:
    """Snapshot source localization by Gauss-Newton on the TDOA residuals.

    Minimizes ``sum_i (r_i - h_i(x))^2``; with ``weighted=True`` the
    residuals are weighted by the inverse of the correlated TDOA noise
    covariance (requires the measurement's ``noise_sigma`` > 0).
    Iterates until the step norm drops below ``step_tol`` or the iteration
    budget runs out, returning the last iterate either way.

    ``converged`` is only set when the stationary point is also consistent
    with the measurement noise level: Gauss-Newton can settle in a spurious
    local minimum (mirror-image geometry), and such iterates carry a
    residual far above the noise scale. They are flagged non-converged
    rather than returned as silently wrong positions. Singular normal
    equations (degenerate geometry) are likewise reported as
    non-convergence, not raised.
    """
    z = measurement.range_diffs
    if anchors.count < 3:
        raise ValueError("TDOA solving needs at least three anchors")
    if len(z) != anchors.count - 1:
        raise ValueError("measurement length does not match the anchor set")
    x = np.array(initial_guess, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise ValueError("initial_guess must be a finite 2-D point")
    if weighted:
        if measurement.noise_sigma <= 0:
            raise ValueError("weighted solve needs a positive measurement noise_sigma")
        weight = np.linalg.inv(
            tdoa_noise_covariance(anchors.count, measurement.noise_sigma)
        )
    else:
        weight = np.eye(anchors.count - 1)

    iterations = 0
    for iterations in range(1, max_iterations + 1):
        try:
            residual = z - range_differences(x, anchors)
            jac = range_difference_jacobian(x, anchors)
        except ValueError:
            # iterate landed on an anchor: model singular there
            return LsSolution(x, False, iterations, float("nan"))
        normal = jac.T @ weight @ jac
        rhs = jac.T @ weight @ residual
        try:
            step = np.linalg.solve(normal, rhs)
        except np.linalg.LinAlgError:
            return LsSolution(x, False, iterations, float(np.linalg.norm(residual)))
        if not np.all(np.isfinite(step)):
            return LsSolution(x, False, iterations, float(np.linalg.norm(residual)))
        x = x + step
        if np.linalg.norm(step) < step_tol:
            final_norm = float(np.linalg.norm(z - range_differences(x, anchors)))
            # a genuine fit leaves a residual on the noise scale;
            # sqrt(2)*sigma is the per-entry noise std
            noise_scale = np.sqrt(2.0) * measurement.noise_sigma * np.sqrt(len(z))
            consistent = final_norm <= max(residual_tol, 8.0 * noise_scale)
            return LsSolution(x, consistent, iterations, final_norm)
    try:
        final_norm = float(np.linalg.norm(z - range_differences(x, anchors)))
    except ValueError:
        final_norm = float("nan")
    return LsSolution(x, False, iterations, final_norm)


def derive_round_seed(master_seed: int, round_index: int) -> int:
    """Documented splitting rule: SeedSequence((master, index)) -> 64-bit word."""
    ss = np.random.SeedSequence([int(master_seed), int(round_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _round_streams(round_seed: int):
    traj_ss, meas_ss, filt_ss = np.random.SeedSequence(int(round_seed)).spawn(3)
    return (
        np.random.default_rng(traj_ss),
        np.random.default_rng(meas_ss),
        np.random.default_rng(filt_ss),
    )


def run_round(config: ScenarioConfig, filter_kind: str | None = None,
              round_seed: int = 0) -> RoundResult:
    """Simulate one round: trajectory, measurements, filter, RMSE.

    Fully deterministic given (config, filter_kind, round_seed). The
    trajectory and measurement streams do not depend on the filter kind or
    its configuration, so rounds sharing a seed are paired across filters.
    """
    config.validate()
    kind = config.filter_kind if filter_kind is None else filter_kind
    if kind not in FILTER_KINDS:
        raise ScenarioError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")
    anchors = config.build_anchors()
    mobility = config.build_mobility(anchors)
    rng_traj, rng_meas, rng_filt = _round_streams(round_seed)
    trajectory = generate_trajectory(mobility, rng_traj)
    estimator = make_filter(kind, anchors, config.build_filter_config(), rng_filt)
    toa_sigma = config.toa_noise_sigma

    records: list[StepRecord] = []
    errors = np.empty(config.steps)
    degenerate_steps = 0
    for k in range(1, config.steps + 1):
        previous = trajectory.states[k - 1]
        current = trajectory.states[k]
        estimator.predict((previous.speed, previous.heading), mobility.delta_t, rng_filt)
        measurement = generate_tdoa(current.position, anchors, toa_sigma, rng_meas)
        estimate = estimator.update(measurement, rng_filt)
        err = float(np.linalg.norm(estimate.position - current.position))
        errors[k - 1] = err
        degenerate_steps += int(estimate.degenerate)
        records.append(
            StepRecord(
                step=k,
                true_x=float(current.position[0]),
                true_y=float(current.position[1]),
                est_x=float(estimate.position[0]),
                est_y=float(estimate.position[1]),
                err=err,
                n_eff=estimate.n_eff,
                resampled=estimate.resampled,
                degenerate=estimate.degenerate,
            )
        )
    rmse = float(np.sqrt(np.mean(errors * errors)))
    return RoundResult(
        filter_kind=kind,
        round_seed=int(round_seed),
        errors=errors,
        rmse=rmse,
        trace=tuple(records),
        degenerate_steps=degenerate_steps,
    )


def _round_task(args) -> tuple[float, int]:
    config, kind, seed = args
    result = run_round(config, kind, seed)
    return result.rmse, result.degenerate_steps


def run_experiment(config: ScenarioConfig, filter_kind: str | None = None,
                   parallelism: int = 1) -> RmseReport:
    """Run ``config.rounds`` independent rounds and aggregate RMSE stats.

    Parallel execution produces results identical to serial execution:
    per-round seeds are precomputed and results are reduced in round
    order.
    """
    config.validate()
    kind = config.filter_kind if filter_kind is None else filter_kind
    seeds = [derive_round_seed(config.seed, k) for k in range(config.rounds)]
    tasks = [(config, kind, seed) for seed in seeds]
    if parallelism > 1 and config.rounds > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_round_task, tasks, chunksize=8))
    else:
        outcomes = [_round_task(t) for t in tasks]
    rmses = np.array([rmse for rmse, _ in outcomes])
    degenerate_steps = sum(d for _, d in outcomes)
    mean = float(rmses.mean())
    if config.rounds > 1:
        variance = float(rmses.var(ddof=1))
        degenerate_variance = False
    else:
        variance = 0.0
        degenerate_variance = True
    return RmseReport(
        filter_kind=kind,
        rmse_per_round=rmses,
        mean=mean,
        variance=variance,
        rounds=config.rounds,
        seed=config.seed,
        config_hash=config_hash(config),
        config_items=tuple(resolved_items(config)),
        degenerate_variance=degenerate_variance,
        degenerate_steps=degenerate_steps,
    )


def _with_particles(config: ScenarioConfig, value: int) -> ScenarioConfig:
    import dataclasses

    threshold = min(config.resample_threshold, float(value))
    return dataclasses.replace(config, particles=int(value), resample_threshold=threshold)


def _with_anchors(config: ScenarioConfig, value: int) -> ScenarioConfig:
    import dataclasses

    return dataclasses.replace(config, anchor_count=int(value))


def _with_steps(config: ScenarioConfig, value: int) -> ScenarioConfig:
    import dataclasses

    return dataclasses.replace(config, steps=int(value))


SWEEP_PARAMETERS = {
    "particles": _with_particles,
    "anchors": _with_anchors,
    "steps": _with_steps,
}


def sweep(config: ScenarioConfig, parameter: str, values,
          filter_kind: str | None = None, parallelism: int = 1) -> list[RmseReport]:
    """One experiment per value, everything else (seed included) held fixed."""
    if parameter not in SWEEP_PARAMETERS:
        raise ScenarioError(
            f"unknown sweep parameter {parameter!r}; valid names: "
            f"{', '.join(sorted(SWEEP_PARAMETERS))}"
        )
    values = list(values)
    if not values:
        raise ScenarioError("sweep needs at least one value")
    apply = SWEEP_PARAMETERS[parameter]
    reports = []
    for value in values:
        varied = apply(config, value)
        varied.validate()
        reports.append(run_experiment(varied, filter_kind, parallelism))
    return reports
