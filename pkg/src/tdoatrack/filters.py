"""Recursive state estimators over the mobility and TDOA models.

Four estimators behind one interface: extended Kalman filter (EKF),
unscented Kalman filter (UKF), a generic bootstrap particle filter (PF),
and the control-aware particle filter (PF-TDOA). The state vector is the
planar position (x, y); velocity enters through the motion model as an
exogenous per-segment command.

The operative difference between the two particle filters: the generic PF
ignores the velocity command and propagates particles with the blind
velocity prior (speed ~ U[v_min, v_max], uniform heading), while PF-TDOA
injects the commanded velocity into its proposal. EKF and UKF also use
the commanded velocity in their predict step. All four weight or update
against the same TDOA range-difference likelihood, using the exact
correlated noise covariance by default.

The numeric cores (:class:`ExtendedKalmanFilter`,
:class:`UnscentedKalmanFilter`, :class:`ParticleFilter`) are dimension
agnostic and take the measurement model as callables, which keeps them
testable against closed-form oracles on linear-Gaussian surrogates. The
TDOA-bound estimators from :func:`make_filter` wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import (
    AnchorSet,
    TdoaMeasurement,
    range_difference_jacobian,
    range_differences,
    tdoa_noise_covariance,
)
from .resampling import effective_sample_size, residual_resample, systematic_resample

__all__ = [
    "FILTER_KINDS",
    "FilterConfig",
    "FilterEstimate",
    "ExtendedKalmanFilter",
    "UnscentedKalmanFilter",
    "ParticleFilter",
    "TdoaKalmanFilter",
    "TdoaParticleFilter",
    "make_filter",
]

FILTER_KINDS = ("ekf", "ukf", "pf", "pf_tdoa")

_RESAMPLERS = {
    "residual": residual_resample,
    "systematic": systematic_resample,
}


@dataclass(frozen=True)
class FilterConfig:
    """Estimator configuration shared by all four filter kinds.

    ``process_noise_var`` is the per-axis variance of the per-step state
    noise the filter assumes; ``measurement_noise_var`` is the variance of
    each TDOA range-difference entry (the underlying per-anchor TOA noise
    std is ``sqrt(measurement_noise_var / 2)``). ``v_min``/``v_max`` bound
    the blind velocity prior used by the generic PF proposal.
    ``prior_margin`` inflates the anchor bounding box (fraction per side)
    that the diffuse initial beliefs are built from.
    """

    process_noise_var: float
    measurement_noise_var: float
    num_particles: int = 50
    resample_threshold: float = 10.0
    resampler: str = "residual"
    correlated_noise: bool = True
    v_min: float = 1.0
    v_max: float = 5.0
    prior_margin: float = 0.2
    ukf_alpha: float = 1e-3
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0

    def __post_init__(self):
        if self.measurement_noise_var <= 0:
            raise ValueError("measurement_noise_var must be positive")
        if self.process_noise_var < 0:
            raise ValueError("process_noise_var must be non-negative")
        if self.num_particles < 1:
            raise ValueError("num_particles must be at least 1")
        if self.resample_threshold > self.num_particles:
            raise ValueError(
                f"resample_threshold {self.resample_threshold} exceeds "
                f"num_particles {self.num_particles}"
            )
        if self.resampler not in _RESAMPLERS:
            raise ValueError(f"resampler must be one of {tuple(_RESAMPLERS)}")
        if not 0.0 <= self.v_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_max")
        if self.prior_margin < 0:
            raise ValueError("prior_margin must be non-negative")


@dataclass(frozen=True)
class FilterEstimate:
    """Posterior summary after an update.

    ``n_eff``/``resampled`` are populated by the particle filters only.
    ``degenerate`` marks an update whose likelihood underflowed across
    every particle; the weights were reset to uniform and filtering
    continued.
    """

    position: np.ndarray
    covariance: np.ndarray
    n_eff: float | None = None
    resampled: bool | None = None
    degenerate: bool = False

    def __post_init__(self):
        pos = np.array(self.position, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        pos.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "covariance", cov)


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _ensure_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize and, if needed, clip negative eigenvalues to zero."""
    sym = _symmetrize(matrix)
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals[0] >= 0.0:
        return sym
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return _symmetrize(vecs @ np.diag(vals) @ vecs.T)


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Matrix square root A with A @ A.T == matrix, robust to mild indefiniteness."""
    n = matrix.shape[0]
    scale = max(np.trace(matrix) / n, 1.0)
    for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.cholesky(matrix + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    vals, vecs = np.linalg.eigh(_symmetrize(matrix))
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


class ExtendedKalmanFilter:
    """EKF for additive-displacement motion and a nonlinear measurement.

    Motion: x' = x + displacement + w, w ~ N(0, process_cov).
    Measurement: z = h(x) + v, v ~ N(0, measurement_cov), linearized at
    the current mean via the supplied analytic Jacobian. The covariance
    update uses the Joseph form to preserve positive semi-definiteness.
    """

    def __init__(self, mean, cov, measurement_fn, jacobian_fn, measurement_cov):
        self._mean = np.array(mean, dtype=float)
        self._cov = _symmetrize(np.array(cov, dtype=float))
        self._h = measurement_fn
        self._jacobian = jacobian_fn
        self._meas_cov = np.array(measurement_cov, dtype=float)

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def cov(self) -> np.ndarray:
        return self._cov.copy()

    def predict(self, displacement, process_cov) -> None:
        self._mean = self._mean + np.asarray(displacement, dtype=float)
        self._cov = _symmetrize(self._cov + np.asarray(process_cov, dtype=float))

    def update(self, z) -> None:
        z = np.asarray(z, dtype=float)
        jac = np.atleast_2d(self._jacobian(self._mean))
        residual = z - np.atleast_1d(self._h(self._mean))
        innovation_cov = jac @ self._cov @ jac.T + self._meas_cov
        gain = np.linalg.solve(innovation_cov, jac @ self._cov).T
        self._mean = self._mean + gain @ residual
        identity = np.eye(self._mean.shape[0])
        shrink = identity - gain @ jac
        self._cov = _ensure_psd(
            shrink @ self._cov @ shrink.T + gain @ self._meas_cov @ gain.T
        )


class UnscentedKalmanFilter:
    """UKF with the scaled unscented transform of the measurement function.

    Same additive motion model as the EKF. ``alpha`` controls the sigma
    point spread, ``beta`` folds in prior distribution knowledge (2 is
    optimal for Gaussians), ``kappa`` is the secondary scaling term.
    """

    def __init__(self, mean, cov, measurement_fn, measurement_cov,
                 alpha: float = 1.0, beta: float = 2.0, kappa: float = 0.0):
        self._mean = np.array(mean, dtype=float)
        self._cov = _symmetrize(np.array(cov, dtype=float))
        self._h = measurement_fn
        self._meas_cov = np.array(measurement_cov, dtype=float)
        n = self._mean.shape[0]
        lam = alpha * alpha * (n + kappa) - n
        if n + lam <= 0:
            raise ValueError("sigma-point scaling n + lambda must be positive")
        self._scale = n + lam
        self._w_mean = np.full(2 * n + 1, 1.0 / (2.0 * self._scale))
        self._w_mean[0] = lam / self._scale
        self._w_cov = self._w_mean.copy()
        self._w_cov[0] += 1.0 - alpha * alpha + beta

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def cov(self) -> np.ndarray:
        return self._cov.copy()

    def _sigma_points(self) -> np.ndarray:
        n = self._mean.shape[0]
        spread = np.sqrt(self._scale) * _sqrt_psd(self._cov)
        points = np.empty((2 * n + 1, n))
        points[0] = self._mean
        points[1 : n + 1] = self._mean + spread.T
        points[n + 1 :] = self._mean - spread.T
        return points

    def predict(self, displacement, process_cov) -> None:
        self._mean = self._mean + np.asarray(displacement, dtype=float)
        self._cov = _symmetrize(self._cov + np.asarray(process_cov, dtype=float))

    def update(self, z) -> None:
        z = np.asarray(z, dtype=float)
        points = self._sigma_points()
        transformed = np.array([np.atleast_1d(self._h(p)) for p in points])
        z_mean = self._w_mean @ transformed
        dz = transformed - z_mean
        dx = points - self._mean
        innovation_cov = (self._w_cov[:, None] * dz).T @ dz + self._meas_cov
        cross_cov = (self._w_cov[:, None] * dx).T @ dz
        gain = np.linalg.solve(innovation_cov, cross_cov.T).T
        self._mean = self._mean + gain @ (z - z_mean)
        self._cov = _ensure_psd(self._cov - gain @ innovation_cov @ gain.T)


class ParticleFilter:
    """Weighted-sample posterior with importance reweighting and resampling.

    The caller supplies particle displacements for the predict step and
    per-particle log-likelihood increments for the reweight step, which
    keeps the class independent of any particular proposal or measurement
    model. Weights stay normalized; reweighting runs in the log domain.
    """

    def __init__(self, particles, *, resample_threshold: float,
                 resampler: str = "residual", weights=None):
        pts = np.array(particles, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("particles must be a non-empty (N, d) array")
        self._particles = pts
        n = pts.shape[0]
        if weights is None:
            self._weights = np.full(n, 1.0 / n)
        else:
            w = np.array(weights, dtype=float)
            if w.shape != (n,):
                raise ValueError("weights must match the number of particles")
            self._weights = w / w.sum()
        if resample_threshold > n:
            raise ValueError(f"resample_threshold {resample_threshold} exceeds N={n}")
        self._threshold = float(resample_threshold)
        if resampler not in _RESAMPLERS:
            raise ValueError(f"resampler must be one of {tuple(_RESAMPLERS)}")
        self._resample = _RESAMPLERS[resampler]

    @property
    def num_particles(self) -> int:
        return self._particles.shape[0]

    @property
    def particles(self) -> np.ndarray:
        return self._particles.copy()

    @property
    def weights(self) -> np.ndarray:
        return self._weights.copy()

    @property
    def n_eff(self) -> float:
        return effective_sample_size(self._weights)

    def predict(self, displacements) -> None:
        disp = np.asarray(displacements, dtype=float)
        if disp.shape != self._particles.shape:
            raise ValueError(
                f"displacements shape {disp.shape} does not match particles "
                f"{self._particles.shape}"
            )
        self._particles = self._particles + disp

    def reweight(self, log_likelihood) -> bool:
        """Multiply weights by exp(log_likelihood) and renormalize.

        Returns True when the update degenerated (no finite posterior
        weight anywhere); the weights are then reset to uniform so
        filtering can continue.
        """
        loglik = np.asarray(log_likelihood, dtype=float)
        if loglik.shape != (self.num_particles,):
            raise ValueError("log_likelihood must have one entry per particle")
        with np.errstate(divide="ignore"):
            logw = np.log(self._weights) + loglik
        peak = np.max(logw)
        if not np.isfinite(peak):
            self._weights = np.full(self.num_particles, 1.0 / self.num_particles)
            return True
        w = np.exp(logw - peak)
        self._weights = w / w.sum()
        return False

    def maybe_resample(self, rng: np.random.Generator) -> bool:
        """Resample when n_eff has fallen below the threshold."""
        if self.n_eff >= self._threshold:
            return False
        parents = self._resample(self._weights, rng)
        self._particles = self._particles[parents]
        self._weights = np.full(self.num_particles, 1.0 / self.num_particles)
        return True

    def estimate(self) -> tuple[np.ndarray, np.ndarray]:
        """Weighted mean and weighted covariance of the particle set."""
        mean = self._weights @ self._particles
        centered = self._particles - mean
        cov = (self._weights[:, None] * centered).T @ centered
        return mean, _symmetrize(cov)


def _inflated_bounds(anchors: AnchorSet, margin: float) -> tuple[np.ndarray, np.ndarray]:
    low, high = anchors.bounding_box()
    pad = margin * (high - low)
    return low - pad, high + pad


def _diffuse_gaussian_prior(anchors: AnchorSet, margin: float) -> tuple[np.ndarray, np.ndarray]:
    low, high = _inflated_bounds(anchors, margin)
    mean = 0.5 * (low + high)
    half_diagonal = 0.5 * float(np.linalg.norm(high - low))
    return mean, half_diagonal ** 2 * np.eye(2)


def _control_displacement(control, delta_t: float) -> np.ndarray:
    if control is None:
        return np.zeros(2)
    speed, heading = control
    return speed * delta_t * np.array([np.cos(heading), np.sin(heading)])


class _TdoaFilterBase:
    """Common TDOA binding: measurement validation and model matrices."""

    kind: str

    def __init__(self, anchors: AnchorSet, config: FilterConfig):
        if anchors.count < 3:
            raise ValueError("TDOA filtering needs at least three anchors")
        self._anchors = anchors
        self._config = config
        toa_sigma = np.sqrt(config.measurement_noise_var / 2.0)
        self._meas_cov = tdoa_noise_covariance(
            anchors.count, toa_sigma, correlated=config.correlated_noise
        )
        self._process_cov = config.process_noise_var * np.eye(2)

    def _check_measurement(self, measurement: TdoaMeasurement) -> np.ndarray:
        if not isinstance(measurement, TdoaMeasurement):
            raise TypeError("update expects a TdoaMeasurement")
        if len(measurement) != self._anchors.count - 1:
            raise ValueError(
                f"measurement has {len(measurement)} differences, expected "
                f"{self._anchors.count - 1}"
            )
        if measurement.reference_index != self._anchors.reference_index:
            raise ValueError("measurement reference anchor does not match the filter's")
        return measurement.range_diffs


class TdoaKalmanFilter(_TdoaFilterBase):
    """EKF or UKF bound to the TDOA range-difference model.

    These are TDOA-only estimators, the benchmark's comparison baselines:
    the per-segment velocity command is not part of their information set
    (that injection is what sets PF-TDOA apart). Under the zero-mean
    velocity prior the predicted mean is the previous mean; the predict
    step inflates the covariance by the configured process noise.
    """

    def __init__(self, kind: str, anchors: AnchorSet, config: FilterConfig):
        super().__init__(anchors, config)
        if kind not in ("ekf", "ukf"):
            raise ValueError("kind must be 'ekf' or 'ukf'")
        self.kind = kind
        mean, cov = _diffuse_gaussian_prior(anchors, config.prior_margin)
        h = lambda x: range_differences(x, anchors)
        if kind == "ekf":
            self._core = ExtendedKalmanFilter(
                mean, cov, h, lambda x: range_difference_jacobian(x, anchors),
                self._meas_cov,
            )
        else:
            self._core = UnscentedKalmanFilter(
                mean, cov, h, self._meas_cov,
                alpha=config.ukf_alpha, beta=config.ukf_beta, kappa=config.ukf_kappa,
            )

    def predict(self, control, delta_t: float, rng: np.random.Generator | None = None) -> None:
        self._core.predict(np.zeros(2), self._process_cov)

    def update(self, measurement: TdoaMeasurement, rng: np.random.Generator | None = None) -> FilterEstimate:
        z = self._check_measurement(measurement)
        self._core.update(z)
        return self.estimate()

    def estimate(self) -> FilterEstimate:
        return FilterEstimate(position=self._core.mean, covariance=self._core.cov)


class TdoaParticleFilter(_TdoaFilterBase):
    """Bootstrap particle filter over the TDOA likelihood.

    ``kind="pf"`` proposes particle motion from the blind velocity prior;
    ``kind="pf_tdoa"`` moves every particle by the commanded velocity.
    Both add the assumed process noise and weight by the TDOA likelihood.
    The returned estimate is the weighted particle mean computed before
    any resampling of that step.
    """

    def __init__(self, kind: str, anchors: AnchorSet, config: FilterConfig,
                 rng: np.random.Generator):
        super().__init__(anchors, config)
        if kind not in ("pf", "pf_tdoa"):
            raise ValueError("kind must be 'pf' or 'pf_tdoa'")
        self.kind = kind
        self._use_control = kind == "pf_tdoa"
        low, high = _inflated_bounds(anchors, config.prior_margin)
        particles = rng.uniform(low, high, size=(config.num_particles, 2))
        self._core = ParticleFilter(
            particles,
            resample_threshold=config.resample_threshold,
            resampler=config.resampler,
        )
        self._proc_std = np.sqrt(config.process_noise_var)
        self._meas_cov_inv = np.linalg.inv(self._meas_cov)
        self._last_n_eff = float(config.num_particles)
        self._last_resampled: bool | None = None
        self._last_degenerate = False

    def predict(self, control, delta_t: float, rng: np.random.Generator) -> None:
        n = self._core.num_particles
        if self._use_control and control is not None:
            displacement = np.broadcast_to(
                _control_displacement(control, delta_t), (n, 2)
            ).copy()
        else:
            speeds = rng.uniform(self._config.v_min, self._config.v_max, size=n)
            headings = rng.uniform(-np.pi, np.pi, size=n)
            displacement = (speeds * delta_t)[:, None] * np.column_stack(
                [np.cos(headings), np.sin(headings)]
            )
        displacement += rng.standard_normal((n, 2)) * self._proc_std
        self._core.predict(displacement)

    def update(self, measurement: TdoaMeasurement, rng: np.random.Generator) -> FilterEstimate:
        z = self._check_measurement(measurement)
        predicted = range_differences(self._core.particles, self._anchors)
        residual = z - predicted
        loglik = -0.5 * np.einsum(
            "ni,ij,nj->n", residual, self._meas_cov_inv, residual
        )
        self._last_degenerate = self._core.reweight(loglik)
        self._last_n_eff = self._core.n_eff
        mean, cov = self._core.estimate()
        self._last_resampled = self._core.maybe_resample(rng)
        return FilterEstimate(
            position=mean,
            covariance=cov,
            n_eff=self._last_n_eff,
            resampled=self._last_resampled,
            degenerate=self._last_degenerate,
        )

    def estimate(self) -> FilterEstimate:
        mean, cov = self._core.estimate()
        return FilterEstimate(
            position=mean,
            covariance=cov,
            n_eff=self._last_n_eff,
            resampled=self._last_resampled,
            degenerate=self._last_degenerate,
        )

    @property
    def particles(self) -> np.ndarray:
        return self._core.particles

    @property
    def weights(self) -> np.ndarray:
        return self._core.weights


def make_filter(kind: str, anchors: AnchorSet, config: FilterConfig,
                rng: np.random.Generator):
    """Construct a TDOA-bound estimator of the requested kind.

    ``rng`` seeds the particle prior for the PF kinds and is ignored by
    the Kalman variants (their diffuse Gaussian prior is deterministic).
    """
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")
    if kind in ("ekf", "ukf"):
        return TdoaKalmanFilter(kind, anchors, config)
    return TdoaParticleFilter(kind, anchors, config, rng)
