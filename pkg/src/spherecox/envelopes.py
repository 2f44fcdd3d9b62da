"""Global rank envelope test on concatenated F, G and J curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .processes import independent_thinning
from .summaries import default_fgj_grid, distance_grid, estimate_fgj

SEGMENTS = ("F", "G", "J")
DEFAULT_N_SIMS = 2499


class ReplicateError(RuntimeError):
    """A simulated replicate failed; carries its index."""

    def __init__(self, index, cause):
        super().__init__(f"replicate {index} failed: {cause}")
        self.index = index


@dataclass(frozen=True, eq=False)
class CurveSet:
    """Observed curve and ``s`` simulated curves on common coordinates.

    ``segment_bounds`` holds the start offsets of each segment plus the total
    length, e.g. ``(0, m1, m1 + m2, m)`` for F, G, J.
    """

    observed: np.ndarray
    simulated: np.ndarray
    segment_bounds: tuple = ()
    r: np.ndarray = None
    labels: tuple = SEGMENTS

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=float).ravel()
        sim = np.atleast_2d(np.asarray(self.simulated, dtype=float))
        if sim.shape[0] < 1:
            raise ValueError("need at least one simulated curve")
        if sim.shape[1] != obs.size:
            raise ValueError("simulated curves must have the same length as the observed one")
        bounds = tuple(int(b) for b in self.segment_bounds) or (0, obs.size)
        if bounds[0] != 0 or bounds[-1] != obs.size or any(np.diff(bounds) < 0):
            raise ValueError("segment bounds must run from 0 to the curve length")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "simulated", sim)
        object.__setattr__(self, "segment_bounds", bounds)
        if self.r is not None:
            object.__setattr__(self, "r", np.asarray(self.r, dtype=float).ravel())

    @property
    def s(self):
        return self.simulated.shape[0]

    @property
    def all_curves(self):
        """``(s + 1, m)`` with the observed curve in row 0."""
        return np.vstack([self.observed, self.simulated])

    @property
    def valid(self):
        """Coordinates with no missing value in any curve."""
        return ~np.any(np.isnan(self.all_curves), axis=0)

    def segment_of(self):
        seg = np.empty(self.observed.size, dtype=object)
        for lab, lo, hi in zip(self.labels, self.segment_bounds[:-1], self.segment_bounds[1:]):
            seg[lo:hi] = lab
        return seg

    def restrict_segment(self, label):
        k = list(self.labels).index(label)
        lo, hi = self.segment_bounds[k], self.segment_bounds[k + 1]
        r = None if self.r is None else self.r[lo:hi]
        return CurveSet(self.observed[lo:hi], self.simulated[:, lo:hi], (0, hi - lo), r, (label,))


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    lower: np.ndarray
    upper: np.ndarray
    p_lo: float
    p_hi: float
    level: float = 0.05
    k_level: int = 1
    ranks: np.ndarray = field(default=None, repr=False)
    curves: CurveSet = field(default=None, repr=False)

    def summary(self):
        return f"p_lo={self.p_lo!r}\np_hi={self.p_hi!r}\nlevel={self.level!r}\nk_level={self.k_level}\n"

    def to_csv(self, path):
        """``index,segment,r,lower,observed,upper``; missing values are empty."""
        cs = self.curves
        seg = cs.segment_of()
        r = cs.r if cs.r is not None else np.full(cs.observed.size, np.nan)

        def fmt(v):
            return "" if np.isnan(v) else repr(float(v))

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "segment", "r", "lower", "observed", "upper"])
            for i in range(cs.observed.size):
                w.writerow([i, seg[i], fmt(r[i]), fmt(self.lower[i]), fmt(cs.observed[i]), fmt(self.upper[i])])


def pointwise_ranks(values, ties="max"):
    """Ranks from below and from above at each coordinate of ``(N, m)`` values.

    With ``ties="max"`` a value's rank from below is the number of curves at or
    below it, so tied values are ranked as central as possible. ``ties="min"``
    gives tied values the smallest rank (one plus the count strictly below).
    """
    v = np.asarray(values, dtype=float)
    srt = np.sort(v, axis=0)
    n = v.shape[0]
    below_le = np.empty(v.shape, dtype=np.int64)
    above_ge = np.empty(v.shape, dtype=np.int64)
    below_lt = np.empty(v.shape, dtype=np.int64)
    above_gt = np.empty(v.shape, dtype=np.int64)
    for j in range(v.shape[1]):
        col = srt[:, j]
        le = np.searchsorted(col, v[:, j], side="right")
        lt = np.searchsorted(col, v[:, j], side="left")
        below_le[:, j], below_lt[:, j] = le, lt
        above_ge[:, j], above_gt[:, j] = n - lt, n - le
    if ties == "max":
        return below_le, above_ge
    if ties == "min":
        return below_lt + 1, above_gt + 1
    raise ValueError("ties must be 'max' or 'min'")


def extreme_ranks_matrix(values, ties="max"):
    """Extreme rank of each row of an ``(N, m)`` matrix without missing values."""
    v = np.asarray(values, dtype=float)
    if v.shape[1] == 0:
        return np.full(v.shape[0], v.shape[0], dtype=np.int64)
    lo, hi = pointwise_ranks(v, ties)
    return np.min(np.minimum(lo, hi), axis=1)


def extreme_ranks(curves, ties="max"):
    """Extreme ranks of the ``s + 1`` curves (observed first).

    Coordinates where any curve is missing are ignored.
    """
    return extreme_ranks_matrix(curves.all_curves[:, curves.valid], ties)


def p_interval(ranks, observed_index=0):
    """Liberal and conservative p-values of the curve at ``observed_index``."""
    ranks = np.asarray(ranks)
    r0 = ranks[observed_index]
    others = np.delete(ranks, observed_index)
    n = ranks.size
    p_lo = (np.sum(others < r0) + 1) / n
    p_hi = (np.sum(others <= r0) + 1) / n
    return float(p_lo), float(p_hi)


def critical_rank(sim_ranks, level, n_total):
    """Largest ``k`` with ``#{sim_ranks < k} <= level * n_total``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if level * n_total < 1.0:
        raise ValueError(f"increase simulations: level {level} needs at least {int(np.ceil(1 / level)) - 1}")
    sim_ranks = np.sort(np.asarray(sim_ranks))
    allowed = level * n_total
    k = 1
    for cand in range(1, int(sim_ranks.max()) + 2):
        if np.searchsorted(sim_ranks, cand, side="left") <= allowed:
            k = cand
        else:
            break
    return k


def rank_envelope(curves, level=0.05, ties="max"):
    """Global rank envelope at ``level`` with the p-interval of the observed curve."""
    ranks = extreme_ranks(curves, ties)
    n_total = curves.s + 1
    k = critical_rank(ranks[1:], level, n_total)
    # keeps lower <= upper when ties push k past the median
    k_eff = min(k, (curves.s + 1) // 2)
    sim = np.sort(curves.simulated, axis=0)
    lower = sim[k_eff - 1].copy()
    upper = sim[curves.s - k_eff].copy()
    invalid = ~curves.valid
    lower[invalid] = np.nan
    upper[invalid] = np.nan
    p_lo, p_hi = p_interval(ranks, 0)
    return EnvelopeResult(lower, upper, p_lo, p_hi, level, k, ranks, curves)


# ---------------------------------------------------------------------------
# goodness-of-fit pipeline
# ---------------------------------------------------------------------------


def fgj_vector(pattern, grid, n_ref=2048):
    f, g, j = estimate_fgj(pattern, grid, n_ref)
    return np.concatenate([f.values, g.values, j.values])


def _homogenize(pattern, intensity, rng, lambda_min):
    if intensity is None:
        return pattern
    return independent_thinning(pattern, intensity, rng, lambda_min)


def simulate_curves(model, window, intensity, n_sims, rng, grid, n_ref=2048, lambda_min=None):
    """Concatenated F/G/J vectors of ``n_sims`` thinned replicates.

    Replicate ``i`` uses the ``i``-th stream spawned from ``rng``.
    """
    lam_min = None if intensity is None else (intensity.min_value() if lambda_min is None else lambda_min)
    out = np.empty((n_sims, 3 * len(grid)))
    for i, child in enumerate(rng.spawn(n_sims)):
        try:
            pat = model.simulate(child, window)
            pat = _homogenize(pat, intensity, child, lam_min)
            out[i] = fgj_vector(pat, grid, n_ref)
        except Exception as exc:  # noqa: BLE001 - re-raised with the replicate index
            raise ReplicateError(i, exc) from exc
    return out


def run_gof_pipeline(model, data, intensity, n_sims=DEFAULT_N_SIMS, rng=None, grid=None, n_ref=2048,
                     level=0.05, lambda_min=None, ties="max"):
    """Thin ``data`` and ``n_sims`` model replicates to homogeneity and test on F, G, J.

    ``model`` is anything with ``simulate(rng, window)``; replicates are
    simulated on the whole sphere and restricted to ``data.window``. The data
    thinning draws from ``rng`` directly, replicates from spawned streams.
    ``intensity=None`` skips thinning.
    """
    if rng is None:
        raise ValueError("an explicit random generator is required")
    grid = distance_grid(default_fgj_grid() if grid is None else grid)
    lam_min = None if intensity is None else (intensity.min_value() if lambda_min is None else lambda_min)
    thinned = _homogenize(data, intensity, rng, lam_min)
    obs = fgj_vector(thinned, grid, n_ref)
    sims = simulate_curves(model, data.window, intensity, n_sims, rng, grid, n_ref, lam_min)
    m = len(grid)
    curves = CurveSet(obs, sims, (0, m, 2 * m, 3 * m), np.tile(grid, 3))
    return rank_envelope(curves, level, ties)


@dataclass(frozen=True, eq=False)
class ThinningSweep:
    p_lo: np.ndarray
    p_hi: np.ndarray
    n_points: np.ndarray

    @property
    def p_hi_variance(self):
        return float(np.var(self.p_hi, ddof=1)) if self.p_hi.size > 1 else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["thinning", "n_points", "p_lo", "p_hi"])
            for i, (n, lo, hi) in enumerate(zip(self.n_points, self.p_lo, self.p_hi)):
                w.writerow([i, int(n), repr(float(lo)), repr(float(hi))])

    def summary(self):
        return (
            f"n_thinnings={self.p_hi.size}\n"
            f"p_lo_mean={float(np.mean(self.p_lo))!r}\n"
            f"p_hi_mean={float(np.mean(self.p_hi))!r}\n"
            f"p_hi_variance={self.p_hi_variance!r}\n"
        )


def thinning_sensitivity(model, data, intensity, n_thinnings=1000, n_sims=199, rng=None, grid=None,
                         n_ref=2048, lambda_min=None, ties="max"):
    """p-intervals over repeated independent thinnings of the observed data.

    The ``n_sims`` simulated curves are drawn once and shared by every
    thinning, so the spread reflects the thinning of the data alone.
    """
    if rng is None:
        raise ValueError("an explicit random generator is required")
    grid = distance_grid(default_fgj_grid() if grid is None else grid)
    lam_min = intensity.min_value() if lambda_min is None else lambda_min
    sim_rng, thin_rng = rng.spawn(2)
    sims = simulate_curves(model, data.window, intensity, n_sims, sim_rng, grid, n_ref, lam_min)
    m = len(grid)
    p_lo = np.empty(n_thinnings)
    p_hi = np.empty(n_thinnings)
    n_pts = np.empty(n_thinnings, dtype=np.int64)
    for i, child in enumerate(thin_rng.spawn(n_thinnings)):
        thinned = independent_thinning(data, intensity, child, lam_min)
        curves = CurveSet(fgj_vector(thinned, grid, n_ref), sims, (0, m, 2 * m, 3 * m))
        p_lo[i], p_hi[i] = p_interval(extreme_ranks(curves, ties), 0)
        n_pts[i] = len(thinned)
    return ThinningSweep(p_lo, p_hi, n_pts)
