"""Range-based measurement models for planar source localization.

Generators for the four classic wireless ranging modalities: time of
arrival (TOA), time difference of arrival (TDOA), received signal
strength (RSS), and direction of arrival (DOA). All public APIs work in
the range domain (meters) and in radians for bearings; time-domain TOAs
relate to ranges through ``SPEED_OF_LIGHT``.

TDOA noise is composed from per-anchor TOA noises, so the range-difference
entries share the reference anchor's noise term and are correlated. The
exact covariance (``2*sigma**2`` on the diagonal, ``sigma**2`` off it) is
available from :func:`tdoa_noise_covariance`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, radio propagation speed

__all__ = [
    "SPEED_OF_LIGHT",
    "AnchorSet",
    "ToaMeasurement",
    "TdoaMeasurement",
    "RssMeasurement",
    "DoaMeasurement",
    "wrap_angle",
    "true_distance",
    "distances_to_anchors",
    "range_differences",
    "range_difference_jacobian",
    "tdoa_noise_covariance",
    "generate_toa",
    "generate_tdoa",
    "reduce_tdoa",
    "generate_rss",
    "generate_doa",
]


def _as_position(p, name: str = "position") -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a length-2 coordinate pair, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to the half-open interval (-pi, pi]."""
    wrapped = np.mod(theta, 2.0 * np.pi)
    wrapped = np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class AnchorSet:
    """Fixed, known anchor positions with a designated reference anchor.

    ``positions`` is an (L, 2) array of planar coordinates in meters. The
    reference anchor is the one all TDOA range differences are formed
    against. Positions are immutable after construction.
    """

    positions: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"anchor positions must have shape (L, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("at least two anchors are required")
        if not np.all(np.isfinite(pos)):
            raise ValueError("anchor positions must be finite")
        diff = pos[:, None, :] - pos[None, :, :]
        dist2 = np.sum(diff * diff, axis=-1)
        iu = np.triu_indices(pos.shape[0], k=1)
        if np.any(dist2[iu] == 0.0):
            raise ValueError("anchor positions must be pairwise distinct")
        if not 0 <= int(self.reference_index) < pos.shape[0]:
            raise ValueError(
                f"reference_index {self.reference_index} out of range for {pos.shape[0]} anchors"
            )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "reference_index", int(self.reference_index))

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def reference(self) -> np.ndarray:
        """Position of the reference anchor."""
        return self.positions[self.reference_index]

    def non_reference_indices(self) -> np.ndarray:
        """Anchor indices in ascending order, excluding the reference."""
        return np.delete(np.arange(self.count), self.reference_index)

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (lower, upper) corners of the anchor layout."""
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True)
class ToaMeasurement:
    """Per-anchor range measurements (meters) derived from arrival times."""

    ranges: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        r = np.array(self.ranges, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "ranges", r)


@dataclass(frozen=True)
class TdoaMeasurement:
    """Non-redundant range differences relative to the reference anchor.

    ``range_diffs[j]`` is ``d_i - d_ref`` (plus noise) for the j-th
    non-reference anchor in ascending index order. ``noise_sigma`` is the
    per-anchor TOA noise component; each difference then has variance
    ``2*noise_sigma**2`` and pairs of differences share ``noise_sigma**2``
    of covariance through the reference anchor.
    """

    range_diffs: np.ndarray
    reference_index: int
    noise_sigma: float

    def __post_init__(self):
        d = np.array(self.range_diffs, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "range_diffs", d)

    def __len__(self) -> int:
        return self.range_diffs.shape[0]


@dataclass(frozen=True)
class RssMeasurement:
    """Per-anchor received powers (watts) under a path-loss law."""

    powers: np.ndarray
    transmit_power: float
    gains: np.ndarray
    path_loss_exponent: float

    def __post_init__(self):
        p = np.array(self.powers, dtype=float)
        g = np.array(self.gains, dtype=float)
        p.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "powers", p)
        object.__setattr__(self, "gains", g)


@dataclass(frozen=True)
class DoaMeasurement:
    """Per-anchor bearings (radians, wrapped to (-pi, pi])."""

    bearings: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        b = np.array(self.bearings, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "bearings", b)


def true_distance(source, anchor) -> float:
    """Euclidean distance between a source position and an anchor position."""
    s = _as_position(source, "source")
    a = _as_position(anchor, "anchor")
    return float(np.hypot(s[0] - a[0], s[1] - a[1]))


def distances_to_anchors(source, anchors: AnchorSet) -> np.ndarray:
    """Distances (L,) from one source position to every anchor.

    ``source`` may also be an (N, 2) batch of positions, in which case the
    result has shape (N, L).
    """
    src = np.asarray(source, dtype=float)
    if src.ndim == 1:
        src = _as_position(src, "source")
        return np.linalg.norm(anchors.positions - src, axis=1)
    if src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"source must have shape (2,) or (N, 2), got {src.shape}")
    return np.linalg.norm(src[:, None, :] - anchors.positions[None, :, :], axis=2)


def range_differences(source, anchors: AnchorSet) -> np.ndarray:
    """Noiseless range differences d_i - d_ref for all non-reference anchors.

    This is the TDOA measurement function h(x). Accepts a single position
    (shape (2,), returning (L-1,)) or a batch (shape (N, 2), returning
    (N, L-1)).
    """
    d = distances_to_anchors(source, anchors)
    keep = anchors.non_reference_indices()
    if d.ndim == 1:
        return d[keep] - d[anchors.reference_index]
    return d[:, keep] - d[:, [anchors.reference_index]]


def range_difference_jacobian(source, anchors: AnchorSet) -> np.ndarray:
    """Jacobian (L-1, 2) of the range-difference function at ``source``.

    Row j is the unit vector toward the j-th non-reference anchor minus
    the unit vector toward the reference:
    ``(x - x_i)/d_i - (x - x_ref)/d_ref``. Undefined (raises) when the
    source coincides with any anchor.
    """
    src = _as_position(source, "source")
    d = distances_to_anchors(src, anchors)
    if np.any(d == 0.0):
        raise ValueError("Jacobian undefined: source coincides with an anchor")
    units = (src - anchors.positions) / d[:, None]
    keep = anchors.non_reference_indices()
    return units[keep] - units[anchors.reference_index]


def tdoa_noise_covariance(num_anchors: int, toa_sigma: float, correlated: bool = True) -> np.ndarray:
    """Covariance of the (L-1,) range-difference noise vector.

    With per-anchor TOA noise std ``toa_sigma``, each difference has
    variance ``2*toa_sigma**2`` and, because every difference shares the
    reference anchor's noise, off-diagonal covariances equal
    ``toa_sigma**2``. Pass ``correlated=False`` for the naive independent
    approximation (diagonal ``2*toa_sigma**2``), kept for ablation.
    """
    if num_anchors < 2:
        raise ValueError("need at least two anchors")
    if toa_sigma < 0:
        raise ValueError("toa_sigma must be non-negative")
    m = num_anchors - 1
    var = toa_sigma * toa_sigma
    if correlated:
        return var * (np.eye(m) + np.ones((m, m)))
    return 2.0 * var * np.eye(m)


def generate_toa(source, anchors: AnchorSet, noise_sigma: float, rng: np.random.Generator) -> ToaMeasurement:
    """Per-anchor ranges with independent zero-mean Gaussian range errors."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    d = distances_to_anchors(source, anchors)
    ranges = d + rng.standard_normal(anchors.count) * noise_sigma
    return ToaMeasurement(ranges=ranges, noise_sigma=float(noise_sigma))


def generate_tdoa(source, anchors: AnchorSet, noise_sigma: float, rng: np.random.Generator) -> TdoaMeasurement:
    """Range differences to the reference anchor with composed TOA noise.

    Draws one TOA noise per anchor and differences them, so the entries
    are correlated through the shared reference noise (see
    :func:`tdoa_noise_covariance`). Requires at least three anchors.
    """
    if anchors.count < 3:
        raise ValueError("TDOA needs at least three anchors")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    d = distances_to_anchors(source, anchors)
    noisy = d + rng.standard_normal(anchors.count) * noise_sigma
    diffs = noisy[anchors.non_reference_indices()] - noisy[anchors.reference_index]
    return TdoaMeasurement(
        range_diffs=diffs,
        reference_index=anchors.reference_index,
        noise_sigma=float(noise_sigma),
    )


def _pair_index(k: int, l: int) -> int:
    # pairs (k, l) with k > l, sorted lexicographically: (1,0), (2,0), (2,1), ...
    return k * (k - 1) // 2 + l


def reduce_tdoa(pairwise, reference_index: int = 0, tol: float = 1e-6) -> np.ndarray:
    """Collapse all L(L-1)/2 pairwise differences to L-1 non-redundant ones.

    ``pairwise`` holds the difference for each ordered pair (k, l) with
    k > l, sorted lexicographically (for L=3: pairs (1,0), (2,0), (2,1)).
    Returns the differences against the reference anchor, ascending anchor
    index, reference skipped. The discarded entries are redundant; if any
    deviates from the reconstruction implied by the kept entries by more
    than ``tol`` the input is corrupt and a ValueError is raised rather
    than averaging the disagreement away.
    """
    p = np.asarray(pairwise, dtype=float).ravel()
    m = p.shape[0]
    num = int(round((1.0 + np.sqrt(1.0 + 8.0 * m)) / 2.0))
    if num * (num - 1) // 2 != m:
        raise ValueError(f"pairwise length {m} is not L*(L-1)/2 for any integer L")
    if not 0 <= reference_index < num:
        raise ValueError(f"reference_index {reference_index} out of range for {num} anchors")

    def against_ref(i: int) -> float:
        if i == reference_index:
            return 0.0
        if i > reference_index:
            return p[_pair_index(i, reference_index)]
        return -p[_pair_index(reference_index, i)]

    base = np.array([against_ref(i) for i in range(num)])
    for k in range(1, num):
        for l in range(k):
            recon = base[k] - base[l]
            dev = abs(p[_pair_index(k, l)] - recon)
            if dev > tol:
                raise ValueError(
                    f"pairwise differences inconsistent: pair ({k},{l}) deviates "
                    f"by {dev:.3e} from the non-redundant reconstruction (tol {tol:.1e})"
                )
    return np.delete(base, reference_index)


def generate_rss(source, anchors: AnchorSet, transmit_power: float, gains, path_loss_exponent: float) -> RssMeasurement:
    """Noise-free received powers under the power-law path-loss model.

    ``power_l = gain_l * transmit_power * d_l**(-path_loss_exponent)``,
    with the exponent restricted to [2, 5] (2 is free space). The law is
    singular at zero distance, so a source coincident with an anchor is
    rejected.
    """
    if transmit_power <= 0:
        raise ValueError("transmit_power must be positive")
    if not 2.0 <= path_loss_exponent <= 5.0:
        raise ValueError("path_loss_exponent must lie in [2, 5]")
    g = np.broadcast_to(np.asarray(gains, dtype=float), (anchors.count,)).copy()
    if np.any(g <= 0):
        raise ValueError("gains must be positive")
    d = distances_to_anchors(source, anchors)
    if np.any(d == 0.0):
        raise ValueError("source coincides with an anchor; path-loss power is singular")
    powers = g * transmit_power * d ** (-path_loss_exponent)
    return RssMeasurement(
        powers=powers,
        transmit_power=float(transmit_power),
        gains=g,
        path_loss_exponent=float(path_loss_exponent),
    )


def generate_doa(source, anchors: AnchorSet, noise_sigma: float, rng: np.random.Generator) -> DoaMeasurement:
    """Per-anchor bearings (angle of the anchor-to-source line of bearing).

    The noiseless bearing at anchor l is ``atan2(y - y_l, x - x_l)``;
    Gaussian angle noise is added and the result wrapped to (-pi, pi].
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    src = _as_position(source, "source")
    delta = src - anchors.positions
    if np.any(np.all(delta == 0.0, axis=1)):
        raise ValueError("source coincides with an anchor; bearing undefined")
    bearings = np.arctan2(delta[:, 1], delta[:, 0])
    bearings = wrap_angle(bearings + rng.standard_normal(anchors.count) * noise_sigma)
    return DoaMeasurement(bearings=bearings, noise_sigma=float(noise_sigma))
