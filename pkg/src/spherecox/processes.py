"""Poisson, Thomas and log Gaussian Cox processes on the sphere.

Every simulator takes an explicit ``numpy.random.Generator`` and returns a
:class:`PointPattern`; the same generator state gives the same pattern.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import optimize

from .covariance import CovarianceModel, evaluate
from .field import (
    EXP_GUARD,
    FieldOverflowError,
    FieldSpec,
    evaluate_mean,
    factorize,
    sample_values,
)
from .geometry import (
    BandWindow,
    FullSphere,
    build_grid,
    geodesic_distance,
    nearest_node,
    normalize,
    pairwise_distances,
    to_cartesian,
    to_spherical,
)

Window = Union[BandWindow, FullSphere]


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Points (``(n, 3)`` unit vectors) observed in ``window``."""

    points: np.ndarray
    window: Window = field(default_factory=FullSphere)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) and not np.all(self.window.contains(pts)):
            raise ValueError("all points must lie inside the window")

    def __len__(self):
        return len(self.points)

    def restrict(self, window):
        """Points falling in ``window``, which becomes the new window."""
        keep = window.contains(self.points) if len(self) else np.zeros(0, bool)
        return PointPattern(self.points[keep], window)

    def to_csv(self, path, degrees=False):
        """``theta,phi`` rows with 15 significant digits."""
        theta, phi = to_spherical(self.points) if len(self) else (np.zeros(0), np.zeros(0))
        if degrees:
            theta, phi = np.degrees(theta), np.degrees(phi)
        with open(path, "w", newline="") as fh:
            if degrees:
                fh.write("# units=degrees\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "phi"])
            for t, p in zip(theta, phi):
                w.writerow([f"{t:.15g}", f"{p:.15g}"])


# ---------------------------------------------------------------------------
# intensity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntensityModel:
    """``beta0 + <u, beta> + gamma cos^2(theta)``, optionally exponentiated.

    With ``log_link=True`` the expression is the log intensity.
    """

    beta0: float
    beta: tuple = (0.0, 0.0, 0.0)
    gamma: float = 0.0
    log_link: bool = False

    def __post_init__(self):
        b = tuple(float(v) for v in self.beta)
        if len(b) != 3:
            raise ValueError("beta must have three components")
        object.__setattr__(self, "beta", b)

    @classmethod
    def constant(cls, lam):
        if lam <= 0:
            raise ValueError("intensity must be positive")
        return cls(float(lam))

    @property
    def is_constant(self):
        return self.beta == (0.0, 0.0, 0.0) and self.gamma == 0.0

    def linear_predictor(self, xyz):
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        return self.beta0 + xyz @ np.asarray(self.beta) + self.gamma * xyz[:, 2] ** 2

    def __call__(self, xyz):
        eta = self.linear_predictor(xyz)
        return np.exp(eta) if self.log_link else eta

    def _profile(self, theta, sign):
        # extreme of <u, beta> over longitude at fixed colatitude
        rho = np.hypot(self.beta[0], self.beta[1])
        eta = self.beta0 + sign * rho * np.sin(theta) + self.beta[2] * np.cos(theta) + self.gamma * np.cos(theta) ** 2
        return np.exp(eta) if self.log_link else eta

    def _argmin_profile(self, f):
        # grid search over colatitude, then bounded refinement around the best cell
        theta = np.linspace(0.0, np.pi, 2049)
        vals = f(theta)
        k = int(np.argmin(vals))
        lo, hi = theta[max(k - 1, 0)], theta[min(k + 1, len(theta) - 1)]
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        return float(min(vals[k], res.fun))

    def min_value(self):
        """Infimum of the intensity over the sphere."""
        return self._argmin_profile(lambda t: self._profile(t, -1.0))

    def max_value(self):
        """Supremum of the intensity over the sphere."""
        return -self._argmin_profile(lambda t: -self._profile(t, 1.0))

    def check_positive(self, nodes=None):
        nodes = build_grid(4098).nodes if nodes is None else nodes
        if np.any(self(nodes) <= 0):
            raise ValueError("intensity must be positive on the reference grid")

    def integral(self, n=4098):
        """Equal-weight quadrature of the intensity over the sphere."""
        nodes = build_grid(n).nodes
        return float(np.mean(self(nodes)) * 4.0 * np.pi)


# Fitted galaxy intensity, coefficients as published.
GALAXY_INTENSITY = IntensityModel(6.06, (-0.112, -0.149, 0.320), 1.971)
# Same coefficients read as a log-linear model; this matches the catalog size.
GALAXY_INTENSITY_LOG = IntensityModel(6.06, (-0.112, -0.149, 0.320), 1.971, log_link=True)


def _as_intensity_fn(lam):
    if callable(lam):
        return lam
    value = float(lam)
    return lambda xyz: np.full(len(np.atleast_2d(xyz)), value)


# ---------------------------------------------------------------------------
# Poisson
# ---------------------------------------------------------------------------


def simulate_poisson(lambda_fn, lambda_max, window, rng):
    """Inhomogeneous Poisson process by thinning a homogeneous one.

    ``lambda_fn`` may be a callable on ``(n, 3)`` arrays or a constant and must
    not exceed ``lambda_max`` on the window.
    """
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    window = FullSphere() if window is None else window
    fn = _as_intensity_fn(lambda_fn)
    n = rng.poisson(lambda_max * window.area)
    cand = window.sample_uniform(n, rng)
    if n == 0:
        return PointPattern(cand, window)
    p = np.asarray(fn(cand), dtype=float) / lambda_max
    if np.any(p > 1.0 + 1e-9):
        raise ValueError("lambda_fn exceeds lambda_max")
    keep = rng.uniform(size=n) < p
    return PointPattern(cand[keep], window)


# ---------------------------------------------------------------------------
# von Mises-Fisher and Thomas
# ---------------------------------------------------------------------------


def vmf_density(u, y, xi):
    """``xi / (4 pi sinh xi) exp(xi <u, y>)`` evaluated stably for large ``xi``."""
    dot = np.asarray(u) @ np.asarray(y)
    # xi/(4 pi sinh xi) e^{xi t} = xi/(2 pi (1 - e^{-2 xi})) e^{xi (t - 1)}
    return xi / (2.0 * np.pi * -np.expm1(-2.0 * xi)) * np.exp(xi * (dot - 1.0))


def _orthonormal_frame(y):
    """Two unit vectors spanning the plane orthogonal to each row of ``y``."""
    y = np.atleast_2d(y)
    helper = np.where(np.abs(y[:, [2]]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = normalize(np.cross(helper, y))
    e2 = np.cross(y, e1)
    return e1, e2


def sample_vmf(y, xi, rng, size=None):
    """Draw from the von Mises-Fisher distribution on S^2.

    The cosine ``t`` of the angle to ``y`` is drawn by inverting its CDF,
    ``t = 1 + log(w + (1 - w) e^{-2 xi}) / xi``, written with ``log1p`` so it
    stays finite for any ``xi``; the azimuth about ``y`` is uniform. ``y``
    may be one direction or an ``(n, 3)`` array (one draw per row).
    """
    if not xi > 0:
        raise ValueError("xi must be positive")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1 and size is None
    if y.ndim == 1:
        y = np.tile(y, (1 if size is None else size, 1))
    n = len(y)
    w = rng.uniform(size=n)
    t = 1.0 + np.log1p(w * np.expm1(-2.0 * xi)) / xi
    t = np.clip(t, -1.0, 1.0)
    psi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    e1, e2 = _orthonormal_frame(y)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))[:, None]
    out = t[:, None] * y + s * (np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2)
    out = normalize(out)
    return out[0] if single else out


@dataclass(frozen=True)
class ThomasParams:
    """Parent intensity ``kappa`` (per steradian) and vMF concentration ``xi``."""

    kappa: float
    xi: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.xi > 0):
            raise ValueError("kappa and xi must be positive")


def simulate_thomas(params, intensity, rng, window=None):
    """Inhomogeneous Thomas process via its cluster construction.

    Parents form a Poisson process of intensity ``kappa`` on the whole sphere.
    Each parent gets ``Poisson(lambda_max / kappa)`` vMF offspring, each kept
    with probability ``lambda(u) / lambda_max``; the result is restricted to
    ``window``. This is the Cox process driven by
    ``lambda(u) * sum_y f_{y,xi}(u) / kappa``.
    """
    window = FullSphere() if window is None else window
    if isinstance(intensity, (int, float)):
        intensity = IntensityModel.constant(intensity)
    lam_max = intensity.max_value()
    n_par = rng.poisson(params.kappa * 4.0 * np.pi)
    parents = FullSphere().sample_uniform(n_par, rng)
    counts = rng.poisson(lam_max / params.kappa, size=n_par)
    centers = np.repeat(parents, counts, axis=0)
    if len(centers) == 0:
        return PointPattern(np.zeros((0, 3)), window)
    kids = sample_vmf(centers, params.xi, rng)
    if not intensity.is_constant:
        keep = rng.uniform(size=len(kids)) < intensity(kids) / lam_max
        kids = kids[keep]
    kids = kids[window.contains(kids)] if len(kids) else kids
    return PointPattern(kids, window)


# ---------------------------------------------------------------------------
# log Gaussian Cox process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LgcpParams:
    """Intensity function and covariance of the underlying Gaussian field."""

    intensity: IntensityModel
    model: CovarianceModel

    def mean_fn(self, xyz):
        if getattr(self.intensity, "log_link", False):
            return self.intensity.linear_predictor(xyz) - evaluate(self.model, 0.0) / 2.0
        lam = self.intensity(xyz)
        if np.any(lam <= 0):
            raise ValueError("intensity must be positive where the field is evaluated")
        return np.log(lam) - evaluate(self.model, 0.0) / 2.0

    def field_spec(self):
        return FieldSpec(self.mean_fn, self.model)


def _field_spec(params):
    return params.field_spec() if isinstance(params, LgcpParams) else params


def simulate_lgcp(params, mesh, rng, window=None, fact=None):
    """LGCP with the field approximated by its value at the nearest grid node.

    ``params`` is :class:`LgcpParams` or any :class:`FieldSpec` (for example a
    Palm-shifted one). Pass ``fact`` to reuse a factorization across
    replicates; it must belong to ``mesh``.
    """
    spec = _field_spec(params)
    window = FullSphere() if window is None else window
    if fact is None:
        fact = factorize(mesh, spec.model)
    elif fact.mesh is not mesh:
        raise ValueError("factorization was built for a different mesh")
    values = sample_values(fact, spec.mean_fn, rng)
    if np.any(values > EXP_GUARD):
        raise FieldOverflowError(f"field value {values.max():.1f} exceeds {EXP_GUARD}")
    z = np.exp(values)
    lam_max = float(z.max())
    n = rng.poisson(lam_max * window.area)
    cand = window.sample_uniform(n, rng)
    if n == 0:
        return PointPattern(cand, window)
    keep = rng.uniform(size=n) < z[nearest_node(mesh, cand)] / lam_max
    return PointPattern(cand[keep], window)


# ---------------------------------------------------------------------------
# thinning and moments
# ---------------------------------------------------------------------------


def independent_thinning(pattern, intensity, rng, lambda_min=None):
    """Keep each point with probability ``lambda_min / lambda(u)``."""
    lam_min = intensity.min_value() if lambda_min is None else lambda_min
    if len(pattern) == 0:
        return pattern
    lam = np.asarray(intensity(pattern.points), dtype=float)
    if np.any(lam <= 0):
        raise ValueError("intensity must be positive at every point")
    keep = rng.uniform(size=len(pattern)) < lam_min / lam
    return PointPattern(pattern.points[keep], pattern.window)


def nth_order_correlation(model, points):
    """``exp(sum_{i<j} c(u_i, u_j))`` for ``n >= 2`` points."""
    pts = np.atleast_2d(points)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    d = pairwise_distances(pts)
    iu = np.triu_indices(len(pts), k=1)
    return float(np.exp(np.sum(evaluate(model, d[iu]))))


def palm_shift(params, u):
    """Field spec of the reduced Palm distribution at ``u``.

    Same covariance, mean shifted by ``c(d(u, v))``.
    """
    spec = _field_spec(params)
    u = np.asarray(u, dtype=float)
    base = spec.mean_fn
    model = spec.model

    def shifted(xyz):
        xyz = np.atleast_2d(xyz)
        return evaluate_mean(base, xyz) + evaluate(model, geodesic_distance(xyz, u))

    return FieldSpec(shifted, model)


# ---------------------------------------------------------------------------
# model wrappers used by fitting, envelopes and the CLI
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonModel:
    intensity: IntensityModel

    def simulate(self, rng, window=None):
        return simulate_poisson(self.intensity, self.intensity.max_value(), window, rng)


@dataclass(frozen=True)
class ThomasModel:
    params: ThomasParams
    intensity: IntensityModel

    def simulate(self, rng, window=None):
        return simulate_thomas(self.params, self.intensity, rng, window)


@dataclass(frozen=True, eq=False)
class LgcpModel:
    """LGCP bound to a grid; the factorization is computed once and reused."""

    params: LgcpParams
    mesh: object
    fact: object = None

    def __post_init__(self):
        if self.fact is None:
            object.__setattr__(self, "fact", factorize(self.mesh, self.params.model))

    def simulate(self, rng, window=None):
        return simulate_lgcp(self.params, self.mesh, rng, window, self.fact)


def pattern_from_angles(theta, phi, window=None):
    return PointPattern(to_cartesian(theta, phi), FullSphere() if window is None else window)
