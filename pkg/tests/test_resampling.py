import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdoatrack.resampling import (
    effective_sample_size,
    multinomial_resample,
    residual_resample,
    systematic_resample,
)

ALL_SCHEMES = [residual_resample, systematic_resample, multinomial_resample]


class TestEffectiveSampleSize:
    def test_uniform_weights(self):
        assert effective_sample_size(np.full(50, 0.02)) == pytest.approx(50.0, abs=1e-9)

    def test_fully_degenerate(self):
        w = np.zeros(10)
        w[3] = 1.0
        assert effective_sample_size(w) == pytest.approx(1.0, abs=1e-9)

    def test_direct_evaluation(self):
        assert effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(
            2.6666666666666665, abs=1e-12
        )

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="normalized"):
            effective_sample_size([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            effective_sample_size([1.5, -0.5])

    @given(raw=st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=64))
    def test_bounds(self, raw):
        w = np.array(raw)
        w /= w.sum()
        ess = effective_sample_size(w)
        n = len(w)
        assert 1.0 - 1e-9 <= ess <= n + 1e-9


class TestResidualResample:
    def test_uniform_weights_identity_multiset(self):
        w = np.full(8, 1.0 / 8.0)
        idx = residual_resample(w, np.random.default_rng(0))
        assert sorted(idx.tolist()) == list(range(8))

    def test_half_half_exact(self):
        idx = residual_resample(np.array([0.5, 0.5, 0.0, 0.0]), np.random.default_rng(0))
        assert sorted(idx.tolist()) == [0, 0, 1, 1]

    def test_unbiased_mean_counts(self):
        w = np.array([0.5, 0.3, 0.2])
        rng = np.random.default_rng(21)
        runs = 100_000
        counts = np.zeros(3)
        for _ in range(runs):
            counts += np.bincount(residual_resample(w, rng), minlength=3)
        np.testing.assert_allclose(counts / runs, [1.5, 0.9, 0.6], rtol=0.01)

    def test_floor_guarantee_every_run(self):
        w = np.array([0.45, 0.35, 0.15, 0.05])
        floors = np.floor(4 * w)
        rng = np.random.default_rng(5)
        for _ in range(2000):
            counts = np.bincount(residual_resample(w, rng), minlength=4)
            assert np.all(counts >= floors)

    def test_lower_variance_than_multinomial(self):
        w = np.array([0.5, 0.3, 0.2])
        runs = 50_000
        rng = np.random.default_rng(9)
        res = np.array([np.bincount(residual_resample(w, rng), minlength=3)
                        for _ in range(runs)])
        mul = np.array([np.bincount(multinomial_resample(w, rng), minlength=3)
                        for _ in range(runs)])
        assert np.all(res.var(axis=0) <= mul.var(axis=0))


class TestSystematicResample:
    def test_uniform_weights_identity_multiset(self):
        w = np.full(6, 1.0 / 6.0)
        idx = systematic_resample(w, np.random.default_rng(1))
        assert sorted(idx.tolist()) == list(range(6))

    def test_single_surviving_particle(self):
        w = np.zeros(5)
        w[2] = 1.0
        idx = systematic_resample(w, np.random.default_rng(1))
        assert np.all(idx == 2)

    def test_unbiased_mean_counts(self):
        w = np.array([0.5, 0.3, 0.2])
        rng = np.random.default_rng(13)
        runs = 100_000
        counts = np.zeros(3)
        for _ in range(runs):
            counts += np.bincount(systematic_resample(w, rng), minlength=3)
        np.testing.assert_allclose(counts / runs, [1.5, 0.9, 0.6], rtol=0.01)


@pytest.mark.parametrize("scheme", ALL_SCHEMES)
class TestSchemeContracts:
    def test_output_shape_and_range(self, scheme):
        rng = np.random.default_rng(3)
        for n in (1, 2, 7, 33):
            w = rng.dirichlet(np.ones(n))
            idx = scheme(w, rng)
            assert idx.shape == (n,)
            assert np.issubdtype(idx.dtype, np.integer)
            assert idx.min() >= 0 and idx.max() < n

    def test_rejects_unnormalized(self, scheme):
        with pytest.raises(ValueError, match="normalized"):
            scheme(np.array([0.9, 0.3]), np.random.default_rng(0))
