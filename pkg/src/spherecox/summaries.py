"""Theoretical and empirical summary functions on S^2.

K functions, pair correlation functions and the border-corrected (reduced
sample) estimators of the inhomogeneous K function and of F, G and J.
Missing values are ``nan``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .covariance import evaluate
from .geometry import chord_to_geodesic, fibonacci_lattice, geodesic_to_chord

KINDS = ("K", "F", "G", "J", "pcf")


def distance_grid(r_values):
    """Validate a strictly increasing grid of distances in ``[0, pi]``."""
    r = np.asarray(r_values, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("empty distance grid")
    if r[0] < 0 or r[-1] > np.pi + 1e-12:
        raise ValueError("distances must lie in [0, pi]")
    if np.any(np.diff(r) <= 0):
        raise ValueError("distance grid must be strictly increasing")
    return np.minimum(r, np.pi)


def default_fgj_grid(n=512):
    return np.linspace(0.0, np.pi / 2.0, n)


def default_k_grid(b, n=512):
    return np.linspace(0.0, b, n)


@dataclass(frozen=True, eq=False)
class SummaryCurve:
    """Values of one summary function on a distance grid."""

    r: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        r = distance_grid(self.r)
        v = np.asarray(self.values, dtype=float).ravel()
        if v.shape != r.shape:
            raise ValueError("values must match the distance grid")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def to_csv(self, path):
        """``r,value,kind`` rows; missing values are empty fields."""
        with open(path, "w", newline="") as fh:
            write_curves(fh, [self])


def write_curves(fh, curves):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["r", "value", "kind"])
    for c in curves:
        for r, v in zip(c.r, c.values):
            w.writerow([repr(float(r)), "" if np.isnan(v) else repr(float(v)), c.kind])


def read_curve(path, kind="K"):
    rs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            if row.get("kind", kind) != kind:
                continue
            rs.append(float(row["r"]))
            vs.append(float(row["value"]) if row["value"] != "" else np.nan)
    return SummaryCurve(np.array(rs), np.array(vs), kind)


# ---------------------------------------------------------------------------
# theoretical K functions
# ---------------------------------------------------------------------------


def k_poisson_values(r):
    # 2 pi (1 - cos r) = 4 pi sin^2(r / 2)
    return 4.0 * np.pi * np.sin(np.asarray(r, dtype=float) / 2.0) ** 2


def k_poisson(grid):
    """K function of a Poisson process on S^2."""
    r = distance_grid(grid)
    return SummaryCurve(r, k_poisson_values(r), "K")


def _simpson_panels(f, a, b, tol, max_depth=50):
    """Adaptive Simpson on many panels at once; returns one integral per panel."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    owner = np.arange(a.size)
    tol = np.full(a.size, float(tol))
    result = np.zeros(a.size)
    for depth in range(max_depth + 1):
        if owner.size == 0:
            break
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        err = left + right - whole
        done = (np.abs(err) <= 15.0 * tol) | (depth == max_depth)
        np.add.at(result, owner[done], (left + right + err / 15.0)[done])
        go = ~done
        # split the remaining panels into halves, each with half the tolerance
        a, m, b = np.concatenate([a[go], m[go]]), np.concatenate([lm[go], rm[go]]), np.concatenate([m[go], b[go]])
        fa, fm, fb = (
            np.concatenate([fa[go], fm[go]]),
            np.concatenate([flm[go], frm[go]]),
            np.concatenate([fm[go], fb[go]]),
        )
        whole = np.concatenate([left[go], right[go]])
        tol = np.concatenate([tol[go], tol[go]]) / 2.0
        owner = np.concatenate([owner[go], owner[go]])
    return result


def k_from_pcf_values(g_fn, r, tol=1e-9):
    """``2 pi int_0^r g(s) sin(s) ds`` at each grid distance (adaptive Simpson)."""
    r = distance_grid(r)

    def integrand(s):
        g = np.asarray(g_fn(s), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError("pair correlation function returned non-finite values")
        return 2.0 * np.pi * g * np.sin(s)

    edges = np.concatenate([[0.0], r])
    lo, hi = edges[:-1], edges[1:]
    nonzero = hi > lo
    panels = np.zeros(r.size)
    if np.any(nonzero):
        panels[nonzero] = _simpson_panels(integrand, lo[nonzero], hi[nonzero], tol)
    return np.cumsum(panels)


def k_from_pcf(g_fn, grid, tol=1e-9):
    """Isotropic K function from a pair correlation function ``g(r)``."""
    r = distance_grid(grid)
    return SummaryCurve(r, k_from_pcf_values(g_fn, r, tol), "K")


class PcfQuadrature:
    """Gauss-Legendre nodes per grid panel, cached for repeated K evaluations.

    ``k_values(g_fn)`` returns ``2 pi int_0^r g(s) sin s ds`` on ``r``; the
    node set is fixed so it can be reused across optimizer iterations.
    """

    def __init__(self, r, order=8):
        self.r = distance_grid(r)
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.concatenate([[0.0], self.r])
        lo, hi = edges[:-1], edges[1:]
        half = (hi - lo) / 2.0
        self.nodes = (lo + half)[:, None] + half[:, None] * x[None, :]
        self.weights = half[:, None] * w[None, :] * 2.0 * np.pi * np.sin(self.nodes)

    def k_values(self, g_fn):
        g = np.asarray(g_fn(self.nodes.ravel()), dtype=float).reshape(self.nodes.shape)
        return np.cumsum(np.sum(g * self.weights, axis=1))


def pcf_thomas(params, r):
    """Pair correlation of the vMF Thomas process.

    ``g(r) = 1 + xi sinh(xi s) / (4 pi kappa sinh^2(xi) s)`` with
    ``s = |u + v| = 2 cos(r / 2)``, evaluated in scaled exponentials.
    """
    r = np.asarray(r, dtype=float)
    xi, kappa = params.xi, params.kappa
    s = 2.0 * np.cos(r / 2.0)
    a = xi * s
    # sinh(a)/sinh(xi)^2 = 2 e^{a - 2 xi} (1 - e^{-2a}) / (1 - e^{-2 xi})^2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 2.0 * np.exp(a - 2.0 * xi) * (-np.expm1(-2.0 * a)) / np.expm1(-2.0 * xi) ** 2 / s
    # r = pi: sinh(a)/s -> xi
    ratio = np.where(s > 1e-12, ratio, 4.0 * xi * np.exp(-2.0 * xi) / np.expm1(-2.0 * xi) ** 2)
    return 1.0 + xi * ratio / (4.0 * np.pi * kappa)


def k_thomas_values(params, r, form="exact"):
    """Closed-form K function of the vMF Thomas process.

    ``form="exact"`` is ``K_Pois(r) + (cosh(2 xi) - cosh(w)) / (2 kappa sinh^2 xi)``
    with ``w = xi sqrt(2 (1 + cos r))``, the integral of :func:`pcf_thomas`.
    ``form="printed_sinh"`` uses ``4 kappa sinh^2 xi`` and ``form="printed"``
    uses ``4 kappa sin^2 xi``, the variants in circulation, kept for
    comparison only.
    """
    r = np.asarray(r, dtype=float)
    xi, kappa = params.xi, params.kappa
    kp = k_poisson_values(r)
    if form == "printed":
        w = xi * np.sqrt(2.0 * (1.0 + np.cos(r)))
        return kp + (np.cosh(2 * xi) - np.cosh(w)) / (4.0 * kappa * np.sin(xi) ** 2)
    # w - 2 xi = 2 xi (cos(r/2) - 1) = -4 xi sin^2(r/4)
    d = -4.0 * xi * np.sin(r / 4.0) ** 2
    w = 2.0 * xi + d
    # (cosh 2xi - cosh w) / sinh^2 xi, scaled by e^{-2 xi}
    num = -np.expm1(d) + np.exp(-4.0 * xi) - np.exp(-w - 2.0 * xi)
    excess = 2.0 * num / np.expm1(-2.0 * xi) ** 2
    if form == "exact":
        return kp + excess / (2.0 * kappa)
    if form == "printed_sinh":
        return kp + excess / (4.0 * kappa)
    raise ValueError(f"unknown form {form!r}")


def k_thomas(params, grid, form="exact"):
    r = distance_grid(grid)
    return SummaryCurve(r, k_thomas_values(params, r, form), "K")


def pcf_lgcp(model):
    """``g = exp(c)`` as a callable of distance."""
    return lambda r: np.exp(evaluate(model, np.asarray(r, dtype=float)))


def pcf_curves(model, grid):
    """Pair correlation ``exp(c(r))`` of an LGCP on a distance grid."""
    r = distance_grid(grid)
    return SummaryCurve(r, np.exp(evaluate(model, r)), "pcf")


def k_lgcp(model, grid, tol=1e-9):
    return k_from_pcf(pcf_lgcp(model), grid, tol)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _intensity_values(lambda_fn, pts):
    if callable(lambda_fn):
        lam = np.asarray(lambda_fn(pts), dtype=float)
    else:
        lam = np.full(len(pts), float(lambda_fn))
    return lam


def _close_pairs(pts, r_max):
    """Ordered index pairs ``(i, j)``, ``i != j``, with geodesic distance <= r_max."""
    tree = cKDTree(pts)
    pairs = tree.query_pairs(float(geodesic_to_chord(min(r_max, np.pi))) + 1e-12, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    i, j = pairs[:, 0], pairs[:, 1]
    d = np.arccos(np.clip(np.sum(pts[i] * pts[j], axis=1), -1.0, 1.0))
    keep = d <= r_max
    i, j, d = i[keep], j[keep], d[keep]
    return np.concatenate([i, j]), np.concatenate([j, i]), np.concatenate([d, d])


def estimate_k_inhom(pattern, lambda_fn, grid):
    """Border-corrected estimator of the inhomogeneous K function.

    ``K(r) = sum_{u in X, C(u,r) in W} sum_{v != u, d(u,v) <= r} 1/(lambda(u) lambda(v)) / |W (-) r|``.
    Where the eroded window is empty the value is ``nan``.
    """
    r = distance_grid(grid)
    window = pattern.window
    area = np.asarray(window.eroded_area(r), dtype=float)
    out = np.zeros(r.size)
    pts = pattern.points
    if len(pts) >= 2:
        lam = _intensity_values(lambda_fn, pts)
        if np.any(lam <= 0):
            raise ValueError("intensity must be positive at every data point")
        i, j, d = _close_pairs(pts, r[-1])
        if d.size:
            edge = window.boundary_distance(pts)[i]
            w = 1.0 / (lam[i] * lam[j])
            # pair contributes at grid distances r_k with d <= r_k <= edge
            start = np.searchsorted(r, d, side="left")
            stop = np.searchsorted(r, edge, side="right")
            ok = start < stop
            acc = np.zeros(r.size + 1)
            np.add.at(acc, start[ok], w[ok])
            np.add.at(acc, stop[ok], -w[ok])
            out = np.cumsum(acc[:-1])
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(area > 0, out / np.where(area > 0, area, 1.0), np.nan)
    return SummaryCurve(r, values, "K")


def pcf_from_k(k_curve):
    """Ring averages of ``g`` from increments of a K curve.

    Returns midpoints and ``(K(r2) - K(r1)) / (2 pi (cos r1 - cos r2))``.
    """
    r, k = k_curve.r, k_curve.values
    ring = 2.0 * np.pi * (np.cos(r[:-1]) - np.cos(r[1:]))
    return 0.5 * (r[:-1] + r[1:]), np.diff(k) / ring


def _reference_points(n_ref):
    return fibonacci_lattice(int(n_ref))


def _nn_distance(data, query, exclude_self=False):
    """Geodesic distance from each query point to its nearest data point."""
    if len(data) == 0 or (exclude_self and len(data) < 2):
        return np.full(len(query), np.inf)
    tree = cKDTree(data)
    if exclude_self:
        dist, _ = tree.query(query, k=2)
        chord = dist[:, 1]
    else:
        chord, _ = tree.query(query, k=1)
    return chord_to_geodesic(chord)


def _reduced_sample(nn, edge, r):
    """Fraction of locations with ``edge >= r`` whose nearest neighbour is within ``r``."""
    e_sorted = np.sort(edge)
    at_risk = e_sorted.size - np.searchsorted(e_sorted, r, side="left")
    hit = nn <= edge
    if np.any(hit):
        # location counts at r iff nn <= r <= edge
        lo = np.searchsorted(r, nn[hit], side="left")
        hi = np.searchsorted(r, edge[hit], side="right")
        acc = np.zeros(r.size + 1)
        ok = lo < hi
        np.add.at(acc, lo[ok], 1.0)
        np.add.at(acc, hi[ok], -1.0)
        hits = np.cumsum(acc[:-1])
    else:
        hits = np.zeros(r.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(at_risk > 0, hits / np.maximum(at_risk, 1), np.nan)


def estimate_fgj(pattern, grid, n_ref=2048, reference=None):
    """Border-corrected empty-space (F), nearest-neighbour (G) and J functions.

    F uses ``n_ref`` Fibonacci-lattice reference locations restricted to the
    eroded window; G uses the data points in the eroded window. ``J`` is
    ``(1 - G) / (1 - F)`` where ``F < 1`` and ``nan`` otherwise. Passing
    ``reference`` replaces the lattice (for example by a rotated copy).
    """
    ref = _reference_points(n_ref) if reference is None else np.asarray(reference, dtype=float)
    if len(ref) < 100:
        raise ValueError("n_ref must be at least 100")
    r = distance_grid(grid)
    window = pattern.window
    pts = pattern.points
    ref_edge = window.boundary_distance(ref)
    inside = ref_edge >= 0
    ref, ref_edge = ref[inside], ref_edge[inside]
    f = _reduced_sample(_nn_distance(pts, ref), ref_edge, r)
    if len(pts):
        g = _reduced_sample(_nn_distance(pts, pts, exclude_self=True), window.boundary_distance(pts), r)
    else:
        g = np.full(r.size, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        j = np.where(f < 1.0, (1.0 - g) / (1.0 - f), np.nan)
    return SummaryCurve(r, f, "F"), SummaryCurve(r, g, "G"), SummaryCurve(r, j, "J")
