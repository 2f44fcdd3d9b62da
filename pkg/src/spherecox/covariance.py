"""Isotropic covariance functions on the sphere and Hoelder certificates.

Ten closed-form correlation families ``c0(r)``, ``0 <= r <= pi``, each scaled
by a variance ``sigma^2``. For every family the module also provides

* the variogram ``c(0) - c(r)``, evaluated without cancellation near 0,
* the small-distance limit ``(c0(0) - c0(r)) / r**A -> B``,
* a certificate ``(s, ell, m)`` with ``c(0) - c(r) <= m * r**(ell/2)`` for
  ``r < s``, which is a sufficient condition for the zero-mean Gaussian field
  to be locally sample Hoelder continuous, hence for ``exp(Y)`` to drive a
  well-defined Cox process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np
from scipy import special

# ---------------------------------------------------------------------------
# family definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Family:
    name: str
    params: tuple
    check: Callable[..., str | None]
    corr: Callable[..., np.ndarray]
    vario: Callable[..., np.ndarray]


def _pos(r):
    return np.maximum(r, 0.0)


# powered exponential -------------------------------------------------------


def _pe_corr(r, alpha, phi):
    return np.exp(-(r**alpha) / phi)


def _pe_vario(r, alpha, phi):
    return -np.expm1(-(r**alpha) / phi)


def _pe_check(alpha, phi):
    if not (0 < alpha <= 1):
        return "alpha must lie in (0, 1]"
    if not phi > 0:
        return "phi must be positive"


# Matern --------------------------------------------------------------------

_SERIES_TOL = 1e-16
_MATERN_SERIES_MAX = 1.0


def _e_series(x, nu, start=0):
    """``sum_{n>=start} (x/2)^(2n) / (n! Gamma(n + nu + 1))``, truncated at 1e-16."""
    x = np.asarray(x, dtype=float)
    q = (x / 2.0) ** 2
    total = np.zeros_like(x)
    n = start
    term = q**n / (special.factorial(n) * special.gamma(n + nu + 1.0))
    while True:
        total = total + term
        n += 1
        term = term * q / (n * (n + nu))
        if np.all(np.abs(term) <= _SERIES_TOL * np.maximum(np.abs(total), 1e-300)):
            total = total + term
            return total
        if n > 200:
            return total


def _matern_a(nu):
    return np.pi / (np.sin(np.pi * nu) * special.gamma(nu))


def _matern_corr(r, nu, phi):
    x = np.asarray(r, dtype=float) / phi
    out = np.empty_like(x)
    small = x <= _MATERN_SERIES_MAX
    xs = x[small]
    out[small] = _matern_a(nu) * (_e_series(xs, -nu) - (xs / 2.0) ** (2 * nu) * _e_series(xs, nu))
    xl = x[~small]
    out[~small] = 2.0 / special.gamma(nu) * (xl / 2.0) ** nu * special.kv(nu, xl)
    return out


def _matern_vario(r, nu, phi):
    x = np.asarray(r, dtype=float) / phi
    out = np.empty_like(x)
    small = x <= _MATERN_SERIES_MAX
    xs = x[small]
    # E_{-nu}(0) = 1 / Gamma(1 - nu) and A_nu / Gamma(1 - nu) = 1
    out[small] = _matern_a(nu) * (
        (xs / 2.0) ** (2 * nu) * _e_series(xs, nu) - _e_series(xs, -nu, start=1)
    )
    out[~small] = 1.0 - _matern_corr(x[~small] * phi, nu, phi)
    return out


def _matern_check(nu, phi):
    if not (0 < nu <= 0.5):
        return "nu must lie in (0, 1/2]"
    if not phi > 0:
        return "phi must be positive"


# generalized Cauchy --------------------------------------------------------


def _gc_corr(r, alpha, phi, tau):
    return (1.0 + (r / phi) ** alpha) ** (-tau / alpha)


def _gc_vario(r, alpha, phi, tau):
    return -np.expm1(-tau / alpha * np.log1p((r / phi) ** alpha))


def _gc_check(alpha, phi, tau):
    if not (0 < alpha <= 1):
        return "alpha must lie in (0, 1]"
    if not phi > 0:
        return "phi must be positive"
    if not tau > 0:
        return "tau must be positive"


# Dagum ---------------------------------------------------------------------


def _dagum_vario(r, alpha, phi, tau):
    x = (r / phi) ** tau
    return (x / (1.0 + x)) ** (alpha / tau)


def _dagum_corr(r, alpha, phi, tau):
    return 1.0 - _dagum_vario(r, alpha, phi, tau)


def _dagum_check(alpha, phi, tau):
    if not phi > 0:
        return "phi must be positive"
    if not (0 < tau <= 1):
        return "tau must lie in (0, 1]"
    if not (0 < alpha < tau):
        return "alpha must lie in (0, tau)"


# multiquadric --------------------------------------------------------------


def _mq_base(r, delta):
    """``(1 - delta)^2 / (1 + delta^2 - 2 delta cos r)`` written as ``(1-p)/(1-p cos r)``."""
    p = 2.0 * delta / (1.0 + delta**2)
    return (1.0 - p) / (1.0 - p * np.cos(r))


def _mq_corr(r, delta, tau):
    return _mq_base(r, delta) ** tau


def _mq_vario(r, delta, tau):
    p = 2.0 * delta / (1.0 + delta**2)
    # 1 - base = p (1 - cos r) / (1 - p cos r), 1 - cos r = 2 sin^2(r/2)
    one_minus = p * 2.0 * np.sin(r / 2.0) ** 2 / (1.0 - p * np.cos(r))
    return -np.expm1(tau * np.log1p(-one_minus))


def _mq_check(delta, tau):
    if not (0 < delta < 1):
        return "delta must lie in (0, 1)"
    if not tau > 0:
        return "tau must be positive"


# sine power ----------------------------------------------------------------


def _sp_corr(r, alpha):
    return 1.0 - np.sin(r / 2.0) ** alpha


def _sp_vario(r, alpha):
    return np.sin(r / 2.0) ** alpha


def _sp_check(alpha):
    if not (0 < alpha < 2):
        return "alpha must lie in (0, 2)"


# compactly supported -------------------------------------------------------


def _sph_corr(r, phi):
    x = r / phi
    return (1.0 + 0.5 * x) * _pos(1.0 - x) ** 2


def _sph_vario(r, phi):
    x = np.minimum(r / phi, 1.0)
    # 1 - (1 + x/2)(1 - x)^2 = 3x/2 - x^3/2
    return 1.5 * x - 0.5 * x**3


def _sph_check(phi):
    if not phi > 0:
        return "phi must be positive"


def _askey_corr(r, phi, tau):
    return _pos(1.0 - r / phi) ** tau


def _askey_vario(r, phi, tau):
    x = np.minimum(r / phi, 1.0)
    inside = x < 1.0
    xs = np.where(inside, x, 0.0)
    return np.where(inside, -np.expm1(tau * np.log1p(-xs)), 1.0)


def _askey_check(phi, tau):
    if not phi > 0:
        return "phi must be positive"
    if not tau >= 2:
        return "tau must be at least 2"


def _w2_corr(r, phi, tau):
    x = r / phi
    return (1.0 + tau * x) * _pos(1.0 - x) ** tau


def _w4_corr(r, phi, tau):
    x = r / phi
    return (1.0 + tau * x + (tau**2 - 1.0) / 3.0 * x**2) * _pos(1.0 - x) ** tau


_LOG_SERIES_TERMS = 40


def _log_series(coeffs, tau, n=_LOG_SERIES_TERMS):
    """Taylor coefficients of ``log(P(x)) + tau log(1 - x)``, ``P = sum coeffs[k] x^k``."""
    p = np.zeros(n + 1)
    p[: len(coeffs)] = coeffs
    c = np.zeros(n + 1)
    for k in range(1, n + 1):
        # from P (log P)' = P'
        c[k] = p[k] - sum(j * c[j] * p[k - j] for j in range(1, k)) / k
    c[1:] -= tau / np.arange(1, n + 1)
    return c


def _wendland_vario(coeffs):
    def vario(r, phi, tau):
        x = np.minimum(np.asarray(r, dtype=float) / phi, 1.0)
        inside = x < 1.0
        xs = np.where(inside, x, 0.0)
        cf = coeffs(tau)
        log_val = np.log(np.polyval(cf[::-1], xs)) + tau * np.log1p(-xs)
        # the two logs cancel to O(x^2); sum the series instead near 0
        small = xs < 0.05 / max(tau, 1.0)
        if np.any(small):
            series = _log_series(cf, tau)
            log_val = np.where(small, np.polyval(series[::-1], np.where(small, xs, 0.0)), log_val)
        return np.where(inside, -np.expm1(log_val), 1.0)

    return vario


def _w2_coeffs(tau):
    return np.array([1.0, tau])


def _w4_coeffs(tau):
    return np.array([1.0, tau, (tau**2 - 1.0) / 3.0])


def _wendland_check(min_tau):
    def check(phi, tau):
        if not (0 < phi <= np.pi):
            return "phi must lie in (0, pi]"
        if not tau >= min_tau:
            return f"tau must be at least {min_tau}"

    return check


FAMILIES: Mapping[str, _Family] = MappingProxyType(
    {
        f.name: f
        for f in [
            _Family("powered_exponential", ("alpha", "phi"), _pe_check, _pe_corr, _pe_vario),
            _Family("matern", ("nu", "phi"), _matern_check, _matern_corr, _matern_vario),
            _Family("generalized_cauchy", ("alpha", "phi", "tau"), _gc_check, _gc_corr, _gc_vario),
            _Family("dagum", ("alpha", "phi", "tau"), _dagum_check, _dagum_corr, _dagum_vario),
            _Family("multiquadric", ("delta", "tau"), _mq_check, _mq_corr, _mq_vario),
            _Family("sine_power", ("alpha",), _sp_check, _sp_corr, _sp_vario),
            _Family("spherical", ("phi",), _sph_check, _sph_corr, _sph_vario),
            _Family("askey", ("phi", "tau"), _askey_check, _askey_corr, _askey_vario),
            _Family("c2_wendland", ("phi", "tau"), _wendland_check(4), _w2_corr, _wendland_vario(_w2_coeffs)),
            _Family("c4_wendland", ("phi", "tau"), _wendland_check(6), _w4_corr, _wendland_vario(_w4_coeffs)),
        ]
    }
)

_ALIASES = {
    "poweredexponential": "powered_exponential",
    "generalizedcauchy": "generalized_cauchy",
    "sinepower": "sine_power",
    "c2wendland": "c2_wendland",
    "c4wendland": "c4_wendland",
}


def canonical_family(name):
    key = name.strip().lower().replace("-", "_").replace(" ", "_")
    key = _ALIASES.get(key.replace("_", ""), key)
    if key not in FAMILIES:
        raise ValueError(f"unknown covariance family {name!r}; choose from {sorted(FAMILIES)}")
    return key


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceModel:
    """``variance * c0(r)`` for one of the catalog families.

    Parameters are validated against the family's admissible range on
    construction, e.g. ``CovarianceModel("multiquadric", {"delta": 0.87,
    "tau": 2.03}, variance=1.30)``.
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    variance: float = 1.0

    def __post_init__(self):
        fam = canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        spec = FAMILIES[fam]
        given = dict(self.params)
        if set(given) != set(spec.params):
            raise ValueError(f"{fam} expects parameters {spec.params}, got {tuple(given)}")
        vals = {k: float(given[k]) for k in spec.params}
        if not all(np.isfinite(v) for v in vals.values()):
            raise ValueError("parameters must be finite")
        msg = spec.check(**vals)
        if msg:
            raise ValueError(f"{fam}: {msg}")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError("variance must be positive")
        object.__setattr__(self, "params", MappingProxyType(vals))
        object.__setattr__(self, "variance", float(self.variance))

    def __hash__(self):
        return hash((self.family, tuple(self.params.items()), self.variance))

    def __eq__(self, other):
        if not isinstance(other, CovarianceModel):
            return NotImplemented
        return (self.family, dict(self.params), self.variance) == (
            other.family,
            dict(other.params),
            other.variance,
        )

    def correlation(self, r):
        r_arr = _check_r(r)
        out = FAMILIES[self.family].corr(r_arr, **self.params)
        return _like(r, out)

    def __call__(self, r):
        return evaluate(self, r)

    def with_variance(self, variance):
        return CovarianceModel(self.family, dict(self.params), variance)

    def to_text(self):
        lines = [f"family={self.family}", f"variance={self.variance!r}"]
        lines += [f"{k}={v!r}" for k, v in self.params.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        """Parse ``key=value`` pairs separated by newlines, ``;`` or whitespace."""
        items = parse_key_values(text)
        try:
            family = items.pop("family")
        except KeyError:
            raise ValueError("model text needs a family=... entry") from None
        variance = float(items.pop("variance", items.pop("sigma2", 1.0)))
        return cls(family, {k: float(v) for k, v in items.items()}, variance)


def parse_key_values(text):
    out = {}
    for raw in text.replace(";", "\n").split():
        token = raw.strip()
        if not token or token.startswith("#"):
            continue
        if "=" not in token:
            raise ValueError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def _check_r(r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(np.isnan(r_arr)) or np.any(r_arr < 0) or np.any(r_arr > np.pi + 1e-12):
        raise ValueError("distances must lie in [0, pi]")
    return np.atleast_1d(np.minimum(r_arr, np.pi))


def _like(r, out):
    if np.ndim(r) == 0:
        return float(out[0])
    return out.reshape(np.shape(r))


def evaluate(model, r):
    """Covariance ``sigma^2 c0(r)`` at geodesic distance(s) ``r``."""
    r_arr = _check_r(r)
    return _like(r, model.variance * FAMILIES[model.family].corr(r_arr, **model.params))


def variogram(model, r):
    """``c(0) - c(r)``, the variogram of an isotropic field."""
    r_arr = _check_r(r)
    out = model.variance * FAMILIES[model.family].vario(r_arr, **model.params)
    return _like(r, np.where(r_arr == 0, 0.0, out))


def gram_matrix(model, points, other=None):
    """Covariance matrix ``[c(d(u_i, v_j))]``."""
    from .geometry import pairwise_distances

    d = pairwise_distances(points, other)
    return model.variance * FAMILIES[model.family].corr(d.ravel(), **model.params).reshape(d.shape)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HoelderCertificate:
    """Constants with ``variogram(r) <= m * r**(ell / 2)`` whenever ``r < s``."""

    s: float
    ell: float
    m: float

    def __post_init__(self):
        if not (0 < self.s <= 1):
            raise ValueError("s must lie in (0, 1]")
        if not (0 < self.ell < 1):
            raise ValueError("ell must lie in (0, 1)")
        if not self.m > 0:
            raise ValueError("m must be positive")


@dataclass(frozen=True)
class LimitConstants:
    """``(c0(0) - c0(r)) / r**A -> B`` as ``r -> 0``."""

    A: float
    B: float

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise ValueError("A and B must be positive")


def limit_constants(model):
    """Exponent and constant of the variogram's leading term at the origin.

    Raises ``ValueError`` for the multiquadric family, whose certificate is
    built directly from its closed form in :func:`holder_certificate`.
    """
    p = model.params
    fam = model.family
    if fam == "multiquadric":
        raise ValueError("multiquadric is handled by a dedicated certificate")
    if fam == "powered_exponential":
        return LimitConstants(p["alpha"], 1.0 / p["phi"])
    if fam == "matern":
        nu, phi = p["nu"], p["phi"]
        return LimitConstants(2 * nu, _matern_a(nu) / ((2 * phi) ** (2 * nu) * special.gamma(nu + 1)))
    if fam == "generalized_cauchy":
        a = p["alpha"]
        return LimitConstants(a, p["tau"] / (a * p["phi"] ** a))
    if fam == "dagum":
        return LimitConstants(p["alpha"], p["phi"] ** (-p["alpha"]))
    if fam == "sine_power":
        return LimitConstants(p["alpha"], 2.0 ** (-p["alpha"]))
    if fam == "spherical":
        return LimitConstants(1.0, 3.0 / (2.0 * p["phi"]))
    if fam == "askey":
        return LimitConstants(1.0, p["tau"] / p["phi"])
    if fam == "c2_wendland":
        t = p["tau"]
        return LimitConstants(2.0, t * (t + 1) / (2.0 * p["phi"] ** 2))
    if fam == "c4_wendland":
        t = p["tau"]
        # second-order Taylor coefficient of (1 + t x + (t^2-1) x^2/3)(1-x)^t
        return LimitConstants(2.0, (t + 1) * (t + 2) / (6.0 * p["phi"] ** 2))
    raise AssertionError(fam)


def certificate_grid(s, n_samples):
    """``n_samples`` log-spaced distances strictly inside ``(1e-9, s)``."""
    return np.geomspace(1e-9, s, n_samples + 2)[1:-1]


def verify_certificate(model, cert, n_samples=10_000):
    """Numerically check ``variogram(r) <= m r^(ell/2)`` on log-spaced ``r < s``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    r = certificate_grid(cert.s, n_samples)
    return bool(np.all(variogram(model, r) <= cert.m * r ** (cert.ell / 2.0)))


def holder_certificate(model, alpha=0.49, eps=0.01, n_samples=10_000):
    """Constructive ``(s, ell, m)`` for the variogram bound.

    Multiquadric: ``s = 1``, ``ell = 2 alpha`` and
    ``m = p sigma^2 max(1, tau) / (2 (1 - p))`` with ``p = 2 delta / (1 + delta^2)``,
    from ``1 - c0(r) = p (1 - cos r) / (1 - p cos r) <= p r^2 / (2 (1 - p))``. Other families: ``ell = min(A/2, 1-eps)``,
    ``m = 1.1 B sigma^2`` and ``s`` halved from 1 until the bound checks out.
    """
    if model.family == "multiquadric":
        if not (0 < alpha < 0.5):
            raise ValueError("alpha must lie in (0, 1/2)")
        delta, tau = model.params["delta"], model.params["tau"]
        p = 2.0 * delta / (1.0 + delta**2)
        m = p * model.variance * max(1.0, tau) / (2.0 * (1.0 - p))
        return HoelderCertificate(1.0, 2.0 * alpha, m)
    lim = limit_constants(model)
    ell = min(lim.A / 2.0, 1.0 - eps)
    m = 1.1 * lim.B * model.variance
    s = 1.0
    for _ in range(200):
        cert = HoelderCertificate(s, ell, m)
        if verify_certificate(model, cert, n_samples):
            return cert
        s /= 2.0
    raise RuntimeError(f"no certificate found for {model}")  # pragma: no cover


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def random_model(family, rng, variance=None):
    """Draw a valid model of ``family`` with parameters spread over its range."""
    fam = canonical_family(family)
    u = rng.uniform
    var = u(0.1, 5.0) if variance is None else variance
    if fam == "powered_exponential":
        params = {"alpha": u(0.05, 1.0), "phi": u(0.05, 3.0)}
    elif fam == "matern":
        params = {"nu": u(0.05, 0.5), "phi": u(0.05, 3.0)}
    elif fam == "generalized_cauchy":
        params = {"alpha": u(0.05, 1.0), "phi": u(0.05, 3.0), "tau": u(0.1, 5.0)}
    elif fam == "dagum":
        tau = u(0.05, 1.0)
        params = {"alpha": u(0.02, 0.98) * tau, "phi": u(0.05, 3.0), "tau": tau}
    elif fam == "multiquadric":
        params = {"delta": u(0.02, 0.99), "tau": u(0.05, 5.0)}
    elif fam == "sine_power":
        params = {"alpha": u(0.05, 1.95)}
    elif fam == "spherical":
        params = {"phi": u(0.05, np.pi)}
    elif fam == "askey":
        params = {"phi": u(0.05, np.pi), "tau": u(2.0, 8.0)}
    elif fam == "c2_wendland":
        params = {"phi": u(0.05, np.pi), "tau": u(4.0, 10.0)}
    else:
        params = {"phi": u(0.05, np.pi), "tau": u(6.0, 12.0)}
    return CovarianceModel(fam, params, var)


def default_model(family):
    """A representative model per family, used by the ``certify`` command."""
    defaults = {
        "powered_exponential": {"alpha": 0.5, "phi": 1.0},
        "matern": {"nu": 0.5, "phi": 1.0},
        "generalized_cauchy": {"alpha": 0.5, "phi": 1.0, "tau": 1.0},
        "dagum": {"alpha": 0.5, "phi": 1.0, "tau": 1.0},
        "multiquadric": {"delta": 0.87, "tau": 2.03},
        "sine_power": {"alpha": 1.0},
        "spherical": {"phi": 1.0},
        "askey": {"phi": 1.0, "tau": 3.0},
        "c2_wendland": {"phi": 1.0, "tau": 4.0},
        "c4_wendland": {"phi": 1.0, "tau": 6.0},
    }
    fam = canonical_family(family)
    return CovarianceModel(fam, defaults[fam], 1.0)
