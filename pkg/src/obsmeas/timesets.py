"""Measurable time sets as finite unions of disjoint open intervals.

All measure arithmetic is exact interval arithmetic.  The two telescoping
sequence builders produce geometrically spaced decreasing sequences: one
anchored at a density point of a set (gaps nested inside a single interval,
so every local measure fraction is 1) and one anchored at the origin with
points ``q**m * T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeSet:
    """Sorted disjoint open intervals inside (0, T) with positive measure."""

    horizon: float
    intervals: np.ndarray  # shape (m, 2)

    def __post_init__(self):
        iv = np.array(self.intervals, dtype=float)
        iv.setflags(write=False)
        if iv.ndim != 2 or iv.shape[1] != 2 or iv.shape[0] == 0:
            raise ValueError("intervals must be a nonempty (m, 2) array")
        if not (self.horizon > 0.0):
            raise ValueError("horizon must be positive")
        a, b = iv[:, 0], iv[:, 1]
        if np.any(a < 0.0) or np.any(b > self.horizon) or np.any(a >= b):
            raise ValueError("intervals must satisfy 0 <= a < b <= T")
        if np.any(b[:-1] > a[1:]):
            raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", iv)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def measure(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))


def make_time_set(horizon: float, raw_intervals) -> TimeSet:
    """Normalize raw intervals: clip to (0, T), sort, merge overlaps.

    Touching intervals are merged as well; the result must have positive
    measure.
    """
    if not (horizon > 0.0):
        raise ValueError("horizon must be positive")
    clipped = []
    for a, b in raw_intervals:
        a = max(float(a), 0.0)
        b = min(float(b), float(horizon))
        if a < b:
            clipped.append((a, b))
    if not clipped:
        raise ValueError("time set is empty after clipping to (0, T)")
    clipped.sort()
    merged = [list(clipped[0])]
    for a, b in clipped[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return TimeSet(horizon, np.array(merged))


def intersect_measure(E: TimeSet, a: float, b: float) -> float:
    """Lebesgue measure of E intersected with (a, b)."""
    if not (a < b):
        raise ValueError("query interval must satisfy a < b")
    lo = np.maximum(E.intervals[:, 0], a)
    hi = np.minimum(E.intervals[:, 1], b)
    return float(np.sum(np.clip(hi - lo, 0.0, None)))


def density_point(E: TimeSet) -> float:
    """Midpoint of the longest interval of E, earliest on ties.

    Interior points of intervals have local density one, so any of them is a
    Lebesgue density point; the midpoint maximizes the room for nested
    telescoping gaps.  Lengths within one part in 1e12 count as tied, so
    rounding in the endpoints cannot steal the tie from an earlier interval.
    """
    lengths = E.intervals[:, 1] - E.intervals[:, 0]
    i = int(np.argmax(lengths >= lengths.max() * (1.0 - 1e-12)))
    return float(0.5 * (E.intervals[i, 0] + E.intervals[i, 1]))


@dataclass(frozen=True, eq=False)
class TelescopeSequence:
    """Decreasing points with geometric gap law ``gap_{m+1} = q * gap_m``.

    ``gaps`` holds the consecutive differences evaluated from the geometric
    recurrence (not by subtracting stored points), which stays accurate when
    the ratio is close to one.
    """

    density_point: float
    ratio: float
    points: np.ndarray
    measure_fractions: np.ndarray
    gaps: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size < 2:
            raise ValueError("a telescope sequence needs at least two points")
        if np.any(np.diff(pts) >= 0.0):
            raise ValueError("points must be strictly decreasing")
        for name in ("points", "measure_fractions", "gaps"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _geometric_count(base: float, q: float, truncation: float, max_points: int) -> int:
    # Points survive while their distance to the limit, base * q**m, stays
    # at or above the truncation threshold.
    if truncation <= 0.0:
        return max_points
    if base < truncation:
        return 2
    count = math.floor(math.log(truncation / base) / math.log(q)) + 1
    # Guard against log rounding at the boundary.
    while count >= 1 and base * q ** (count - 1) < truncation:
        count -= 1
    while base * q**count >= truncation:
        count += 1
    return max(2, min(count, max_points))


def telescope_for_density(
    E: TimeSet,
    q: float,
    truncation: float = 1e-12,
    max_points: int = 1_000_000,
    ell: float = None,
) -> TelescopeSequence:
    """Telescoping sequence anchored at a density point of E.

    With ``ell`` the density point inside the interval ``(alpha, beta)`` of
    E, the first point is ``l1 = min(beta, ell + min(1, beta - ell) / 2)``
    and ``l_{m+1} = ell + q**m (l1 - ell)``.  Every gap lies inside one
    interval of E, so each measure fraction equals one; the sequence is cut
    once the distance to ``ell`` falls below ``truncation`` (or at
    ``max_points``).

    ``ell`` may be overridden with any interior point of E; the fraction
    guarantee of at least one third is then checked rather than automatic.
    """
    if not (0.0 < q < 1.0):
        raise ValueError("ratio q must lie in (0, 1)")
    if max_points < 2:
        raise ValueError("max_points must be at least 2")
    if ell is None:
        ell = density_point(E)
    ell = float(ell)
    inside = (E.intervals[:, 0] < ell) & (ell < E.intervals[:, 1])
    if not np.any(inside):
        raise ValueError("anchor must be interior to an interval of E")
    beta = float(E.intervals[np.argmax(inside), 1])
    l1 = min(beta, ell + 0.5 * min(1.0, beta - ell))
    base = l1 - ell
    count = _geometric_count(base, q, truncation, max_points)
    powers = q ** np.arange(count)
    points = ell + base * powers
    gaps = base * (1.0 - q) * powers[:-1]
    fracs = np.empty(count - 1)
    for m in range(count - 1):
        width = points[m] - points[m + 1]
        fracs[m] = intersect_measure(E, points[m + 1], points[m]) / width
    if np.any(fracs < 1.0 / 3.0 - 1e-12):
        raise ValueError("a telescoping gap captures less than a third of E")
    if not (0.0 < gaps[0] <= 1.0):
        raise ValueError("leading gap must lie in (0, 1]")
    return TelescopeSequence(ell, float(q), points, fracs, gaps)


def geometric_horizon_sequence(
    T: float,
    q: float,
    truncation: float = 1e-12,
    max_points: int = 1_000_000,
) -> TelescopeSequence:
    """Sequence ``q**m * T`` decreasing to zero, exact geometric gap law."""
    if not (T > 0.0):
        raise ValueError("horizon must be positive")
    if not (0.0 < q < 1.0):
        raise ValueError("ratio q must lie in (0, 1)")
    count = _geometric_count(T, q, truncation, max_points)
    powers = q ** np.arange(count)
    points = T * powers
    gaps = T * (1.0 - q) * powers[:-1]
    fracs = np.ones(count - 1)
    return TelescopeSequence(0.0, float(q), points, fracs, gaps)


def timeset_to_dict(E: TimeSet) -> dict:
    return {"T": E.horizon, "intervals": [[float(a), float(b)] for a, b in E.intervals]}


def timeset_from_dict(d: dict) -> TimeSet:
    return make_time_set(float(d["T"]), d["intervals"])
