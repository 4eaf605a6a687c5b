"""Weight-degeneracy control for particle filters.

Effective sample size plus three unbiased resampling schemes. Residual
resampling is the default used by the filters; it deterministically
copies floor(N*w_i) of each particle and fills the remaining slots by
multinomial draws on the residual weights, which lowers the conditional
variance of the copy counts. Systematic and plain multinomial schemes
are provided as comparison baselines.

All schemes return an array of N parent indices; the caller copies the
particles and resets the weights to 1/N.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "effective_sample_size",
    "residual_resample",
    "systematic_resample",
    "multinomial_resample",
]

_NORMALIZATION_TOL = 1e-6


def _validate_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ValueError("weights must be a non-empty 1-D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > _NORMALIZATION_TOL:
        raise ValueError(f"weights must be normalized; sum is {w.sum()!r}")
    return w


def effective_sample_size(weights) -> float:
    """1 / sum(w_i^2): N for uniform weights, 1 for a fully degenerate set."""
    w = _validate_weights(weights)
    return float(1.0 / np.sum(w * w))


def residual_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Residual resampling: floor(N*w_i) guaranteed copies + multinomial rest.

    Every particle i receives at least floor(N*w_i) copies in every run;
    the remaining R = N - sum(floor(N*w_i)) slots are drawn from the
    residual weights (N*w_i - floor(N*w_i)) / R. Unbiased:
    E[count_i] = N*w_i.
    """
    w = _validate_weights(weights)
    n = w.shape[0]
    scaled = n * w
    counts = np.floor(scaled).astype(int)
    indices = np.repeat(np.arange(n), counts)
    remainder = n - counts.sum()
    if remainder > 0:
        residual = scaled - counts
        residual /= residual.sum()
        extra = rng.choice(n, size=remainder, p=residual)
        indices = np.concatenate([indices, extra])
    return indices


def systematic_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: one uniform offset, N evenly spaced pointers."""
    w = _validate_weights(weights)
    n = w.shape[0]
    positions = (rng.uniform(0.0, 1.0) + np.arange(n)) / n
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0  # guard against float shortfall in the last bin
    return np.searchsorted(cumulative, positions, side="left")


def multinomial_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Plain multinomial resampling (highest-variance baseline)."""
    w = _validate_weights(weights)
    n = w.shape[0]
    return rng.choice(n, size=n, p=w)
