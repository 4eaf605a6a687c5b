import numpy as np
import pytest

from tdoatrack.filters import (
    ExtendedKalmanFilter,
    FilterConfig,
    ParticleFilter,
    TdoaParticleFilter,
    UnscentedKalmanFilter,
    make_filter,
)
from tdoatrack.measurement import (
    AnchorSet,
    TdoaMeasurement,
    generate_tdoa,
    range_difference_jacobian,
    range_differences,
)


def anchors_10m():
    return AnchorSet(positions=[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)])


def filter_config(**kwargs):
    defaults = dict(process_noise_var=3.0, measurement_noise_var=1.0,
                    num_particles=50, resample_threshold=10.0)
    defaults.update(kwargs)
    return FilterConfig(**defaults)


def scalar_kalman(m, p, b, q, z, r):
    # hand-rolled 1-D Kalman filter step (oracle)
    m, p = m + b, p + q
    k = p / (p + r)
    return m + k * (z - m), (1.0 - k) * p


class TestConstruction:
    def test_pf_starts_with_uniform_weights(self):
        f = make_filter("pf", anchors_10m(), filter_config(), np.random.default_rng(0))
        np.testing.assert_allclose(f.weights, np.full(50, 0.02), atol=1e-15)
        assert f.particles.shape == (50, 2)

    def test_kalman_prior_from_inflated_box(self):
        f = make_filter("ekf", anchors_10m(), filter_config(), np.random.default_rng(0))
        est = f.estimate()
        np.testing.assert_allclose(est.position, [5.0, 5.0], atol=1e-12)
        # box inflated by 20% per side: (-2,-2)..(12,12); std = half diagonal
        std = 0.5 * np.hypot(14.0, 14.0)
        np.testing.assert_allclose(est.covariance, std**2 * np.eye(2), atol=1e-9)

    def test_threshold_above_particle_count_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            filter_config(num_particles=5, resample_threshold=10.0)

    def test_too_few_anchors_rejected(self):
        two = AnchorSet(positions=[(0.0, 0.0), (1.0, 0.0)])
        with pytest.raises(ValueError, match="three anchors"):
            make_filter("ekf", two, filter_config(), np.random.default_rng(0))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown filter kind"):
            make_filter("ckf", anchors_10m(), filter_config(), np.random.default_rng(0))


class TestPredict:
    def test_pf_tdoa_shifts_exactly_with_control(self):
        cfg = filter_config(process_noise_var=0.0)
        f = make_filter("pf_tdoa", anchors_10m(), cfg, np.random.default_rng(1))
        before = f.particles
        f.predict((2.0, 0.0), 1.0, np.random.default_rng(2))
        np.testing.assert_allclose(f.particles - before,
                                   np.tile([2.0, 0.0], (50, 1)), atol=1e-12)

    def test_ekf_zero_noise_is_identity(self):
        cfg = filter_config(process_noise_var=0.0)
        f = make_filter("ekf", anchors_10m(), cfg, np.random.default_rng(0))
        before = f.estimate()
        f.predict((0.0, 0.0), 1.0)
        after = f.estimate()
        np.testing.assert_array_equal(after.position, before.position)
        np.testing.assert_array_equal(after.covariance, before.covariance)

    def test_generic_pf_ignores_control_and_follows_speed_prior(self):
        # blind proposal: mean displacement magnitude = E[speed] * dt
        cfg = filter_config(process_noise_var=0.0, num_particles=1_000_000,
                            resample_threshold=1.0, v_min=1.0, v_max=5.0)
        f = make_filter("pf", anchors_10m(), cfg, np.random.default_rng(3))
        before = f.particles
        f.predict((40.0, 0.0), 1.0, np.random.default_rng(4))
        magnitudes = np.linalg.norm(f.particles - before, axis=1)
        assert magnitudes.mean() == pytest.approx(3.0, rel=0.01)
        assert magnitudes.max() <= 5.0 + 1e-9

    def test_process_noise_inflates_kalman_covariance(self):
        cfg = filter_config(process_noise_var=2.5)
        f = make_filter("ukf", anchors_10m(), cfg, np.random.default_rng(0))
        before = f.estimate().covariance
        f.predict(None, 1.0)
        np.testing.assert_allclose(f.estimate().covariance, before + 2.5 * np.eye(2),
                                   atol=1e-9)


class TestUpdate:
    def test_single_particle_keeps_unit_weight(self):
        cfg = filter_config(num_particles=1, resample_threshold=1.0)
        f = make_filter("pf_tdoa", anchors_10m(), cfg, np.random.default_rng(0))
        meas = generate_tdoa((5.0, 5.0), anchors_10m(), 0.0, np.random.default_rng(0))
        est = f.update(meas, np.random.default_rng(0))
        np.testing.assert_allclose(f.weights, [1.0])
        np.testing.assert_array_equal(est.position, f.particles[0])
        assert est.n_eff == pytest.approx(1.0)

    def test_identical_particles_stay_uniform(self):
        anchors = anchors_10m()
        core = ParticleFilter(np.tile([3.0, 4.0], (20, 1)), resample_threshold=1.0)
        z = range_differences(np.array([5.0, 5.0]), anchors)
        resid = z - range_differences(core.particles, anchors)
        degenerate = core.reweight(-0.5 * np.einsum("ni,ni->n", resid, resid))
        assert not degenerate
        np.testing.assert_allclose(core.weights, np.full(20, 0.05), atol=1e-12)
        assert core.n_eff == pytest.approx(20.0, abs=1e-9)

    def test_weights_normalized_after_noisy_updates(self):
        anchors = anchors_10m()
        cfg = filter_config()
        f = make_filter("pf", anchors, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(10)
        for _ in range(30):
            f.predict(None, 1.0, rng)
            meas = generate_tdoa((5.0, 5.0), anchors, 1.0, rng)
            est = f.update(meas, rng)
            assert abs(f.weights.sum() - 1.0) < 1e-9
            assert 1.0 - 1e-9 <= est.n_eff <= cfg.num_particles + 1e-9

    def test_measurement_shape_mismatch_rejected(self):
        f = make_filter("ekf", anchors_10m(), filter_config(), np.random.default_rng(0))
        bad = TdoaMeasurement(range_diffs=[1.0, 2.0], reference_index=0, noise_sigma=1.0)
        with pytest.raises(ValueError, match="differences"):
            f.update(bad)

    def test_measurement_reference_mismatch_rejected(self):
        f = make_filter("ekf", anchors_10m(), filter_config(), np.random.default_rng(0))
        bad = TdoaMeasurement(range_diffs=[1.0, 2.0, 3.0], reference_index=1,
                              noise_sigma=1.0)
        with pytest.raises(ValueError, match="reference"):
            f.update(bad)

    def test_degenerate_reweight_resets_uniform(self):
        core = ParticleFilter(np.zeros((10, 2)), resample_threshold=1.0)
        degenerate = core.reweight(np.full(10, -np.inf))
        assert degenerate
        np.testing.assert_allclose(core.weights, np.full(10, 0.1))


class TestEstimate:
    def test_even_split(self):
        core = ParticleFilter(np.array([[0.0, 0.0], [2.0, 0.0]]),
                              weights=[0.5, 0.5], resample_threshold=1.0)
        mean, _ = core.estimate()
        np.testing.assert_allclose(mean, [1.0, 0.0])

    def test_weighted_average(self):
        core = ParticleFilter(np.array([[0.0, 0.0], [4.0, 4.0]]),
                              weights=[0.25, 0.75], resample_threshold=1.0)
        mean, _ = core.estimate()
        np.testing.assert_allclose(mean, [3.0, 3.0])

    def test_gaussian_belief_returns_own_mean(self):
        f = make_filter("ukf", anchors_10m(), filter_config(), np.random.default_rng(0))
        np.testing.assert_allclose(f.estimate().position, [5.0, 5.0], atol=1e-12)

    def test_estimate_is_idempotent(self):
        anchors = anchors_10m()
        f = make_filter("pf_tdoa", anchors, filter_config(), np.random.default_rng(0))
        rng = np.random.default_rng(1)
        f.predict((2.0, 0.3), 1.0, rng)
        meas = generate_tdoa((5.0, 5.0), anchors, 1.0, rng)
        f.update(meas, rng)
        first = f.estimate()
        second = f.estimate()
        np.testing.assert_array_equal(first.position, second.position)
        np.testing.assert_array_equal(first.covariance, second.covariance)
        assert first.n_eff == second.n_eff


class TestJacobian:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-4
        worst = 0.0
        for _ in range(100):
            pts = rng.uniform(0.0, 100.0, size=(6, 2))
            anchors = AnchorSet(positions=pts)
            while True:
                x = rng.uniform(0.0, 100.0, size=2)
                if np.min(np.linalg.norm(pts - x, axis=1)) > 1.0:
                    break
            analytic = range_difference_jacobian(x, anchors)
            fd = np.empty_like(analytic)
            for axis in range(2):
                delta = np.zeros(2)
                delta[axis] = h
                fd[:, axis] = (
                    range_differences(x + delta, anchors)
                    - range_differences(x - delta, anchors)
                ) / (2 * h)
            rel = np.max(np.abs(fd - analytic)) / np.max(np.abs(analytic))
            worst = max(worst, rel)
        assert worst < 1e-6


class TestLinearGaussianAgreement:
    """Short cross-check against a hand-rolled scalar Kalman filter."""

    def _measurements(self, seed, steps=20, q=1.0, r=4.0, b=1.0):
        rng = np.random.default_rng(seed)
        x = rng.normal(0.0, 5.0)
        zs = []
        for _ in range(steps):
            x += b + rng.normal(0.0, np.sqrt(q))
            zs.append(x + rng.normal(0.0, np.sqrt(r)))
        return zs

    def test_ekf_matches_kalman(self):
        q, r, b = 1.0, 4.0, 1.0
        zs = self._measurements(0)
        ekf = ExtendedKalmanFilter([0.0], [[25.0]], lambda x: x,
                                   lambda x: np.array([[1.0]]), [[r]])
        m, p = 0.0, 25.0
        for z in zs:
            ekf.predict([b], [[q]])
            ekf.update([z])
            m, p = scalar_kalman(m, p, b, q, z, r)
            assert abs(ekf.mean[0] - m) < 1e-9
            assert abs(ekf.cov[0, 0] - p) < 1e-9

    def test_ukf_matches_kalman(self):
        q, r, b = 1.0, 4.0, 1.0
        zs = self._measurements(1)
        ukf = UnscentedKalmanFilter([0.0], [[25.0]], lambda x: x, [[r]],
                                    alpha=1e-3, beta=2.0, kappa=0.0)
        m, p = 0.0, 25.0
        for z in zs:
            ukf.predict([b], [[q]])
            ukf.update([z])
            m, p = scalar_kalman(m, p, b, q, z, r)
            assert abs(ukf.mean[0] - m) < 1e-6
            assert abs(ukf.cov[0, 0] - p) < 1e-6


class TestCovariancePsd:
    @pytest.mark.parametrize("kind", ["ekf", "ukf"])
    def test_stays_psd_over_long_run(self, kind):
        anchors = anchors_10m()
        cfg = filter_config()
        f = make_filter(kind, anchors, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(100)
        position = np.array([5.0, 5.0])
        for _ in range(1000):
            speed, heading = rng.uniform(1.0, 5.0), rng.uniform(-np.pi, np.pi)
            position = position + speed * np.array([np.cos(heading), np.sin(heading)])
            f.predict((speed, heading), 1.0)
            meas = generate_tdoa(position, anchors, 1.0, rng)
            est = f.update(meas)
            eigenvalues = np.linalg.eigvalsh(est.covariance)
            assert eigenvalues.min() > -1e-8
            assert np.allclose(est.covariance, est.covariance.T, atol=1e-10)


class TestKindSemantics:
    def test_pf_tdoa_uses_control_pf_does_not(self):
        cfg = filter_config(process_noise_var=0.0)
        control = (4.0, np.pi / 2)
        shifts = {}
        for kind in ("pf", "pf_tdoa"):
            f = make_filter(kind, anchors_10m(), cfg, np.random.default_rng(7))
            before = f.particles
            f.predict(control, 1.0, np.random.default_rng(8))
            shifts[kind] = f.particles - before
        np.testing.assert_allclose(shifts["pf_tdoa"],
                                   np.tile([0.0, 4.0], (50, 1)), atol=1e-9)
        assert np.std(np.linalg.norm(shifts["pf"], axis=1)) > 0.1

    def test_pf_tdoa_without_control_falls_back_to_prior(self):
        cfg = filter_config(process_noise_var=0.0)
        f = make_filter("pf_tdoa", anchors_10m(), cfg, np.random.default_rng(7))
        before = f.particles
        f.predict(None, 1.0, np.random.default_rng(8))
        magnitudes = np.linalg.norm(f.particles - before, axis=1)
        assert magnitudes.min() >= 1.0 - 1e-9
        assert magnitudes.max() <= 5.0 + 1e-9

    def test_resampling_triggers_below_threshold(self):
        # box-wide particles against a precise fix collapse the weights
        anchors = anchors_10m()
        cfg = filter_config(num_particles=100, resample_threshold=50.0,
                            measurement_noise_var=0.02)
        f = make_filter("pf_tdoa", anchors, cfg, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        meas = generate_tdoa((5.0, 5.0), anchors, 0.0, rng)
        est = f.update(meas, rng)
        assert isinstance(f, TdoaParticleFilter)
        assert est.n_eff < 50.0
        assert est.resampled is True
        np.testing.assert_allclose(f.weights, np.full(100, 0.01), atol=1e-12)
