"""Points, distances, windows and near-regular grids on the unit sphere S^2.

Points are handled as ``(n, 3)`` float arrays of unit vectors; a single point
is a length-3 array. Angles are radians throughout: ``theta`` is the
colatitude in ``[0, pi]`` and ``phi`` the longitude in ``[0, 2 pi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

FOUR_PI = 4.0 * np.pi
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# exact linear scan below this many nodes, kd-tree above
LINEAR_SCAN_MAX = 512


def normalize(xyz):
    """Scale vectors to unit length. Accepts ``(3,)`` or ``(n, 3)``."""
    xyz = np.asarray(xyz, dtype=float)
    norm = np.linalg.norm(xyz, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize the zero vector")
    return xyz / norm


def to_cartesian(theta, phi):
    """Unit vectors from colatitude/longitude arrays."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def to_spherical(xyz):
    """Return ``(theta, phi)`` for unit vectors.

    ``phi`` is wrapped to ``[0, 2 pi)`` and set to 0 at the poles.
    """
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    theta = np.arctan2(np.hypot(x, y), z)
    phi = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    at_pole = np.hypot(x, y) < 1e-15
    phi = np.where(at_pole, 0.0, phi)
    # mod can return exactly 2 pi for tiny negative inputs
    phi = np.where(phi >= 2.0 * np.pi, 0.0, phi)
    return theta, phi


def geodesic_distance(u, v):
    """Great-circle distance ``arccos(<u, v>)``, always in ``[0, pi]``.

    Evaluated as ``atan2(|u x v|, <u, v>)``, which equals the clamped arccos
    but keeps full precision for nearly equal or antipodal vectors.
    Broadcasts over leading dimensions.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    dot = np.sum(u * v, axis=-1)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(cross, dot)


def pairwise_distances(a, b=None):
    """Matrix of geodesic distances between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    return np.arccos(np.clip(a @ b.T, -1.0, 1.0))


def chord_to_geodesic(chord):
    return 2.0 * np.arcsin(np.clip(np.asarray(chord) / 2.0, 0.0, 1.0))


def geodesic_to_chord(r):
    return 2.0 * np.sin(np.asarray(r) / 2.0)


def cap_area(r):
    """Surface area ``2 pi (1 - cos r)`` of a spherical cap of geodesic radius ``r``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any((r_arr < 0) | (r_arr > np.pi)) or np.any(np.isnan(r_arr)):
        raise ValueError(f"cap radius must lie in [0, pi], got {r}")
    # 1 - cos r = 2 sin^2(r/2) keeps precision for small r
    out = 4.0 * np.pi * np.sin(r_arr / 2.0) ** 2
    return float(out) if out.ndim == 0 else out


def uniform_on_sphere(n, rng):
    """Draw ``n`` i.i.d. points uniform with respect to surface measure."""
    if n < 0:
        raise ValueError("n must be non-negative")
    z = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def random_rotation(rng):
    """Haar-distributed 3x3 rotation matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandWindow:
    """A band ``theta_lo <= theta <= theta_hi`` about ``axis``, or its complement.

    With ``complement=True`` the window is the sphere minus the open band,
    which is the shape of a survey with the galactic plane masked out.
    ``theta`` is measured from ``axis`` (the z axis by default), so a window
    can be rotated together with a pattern.
    """

    theta_lo: float
    theta_hi: float
    complement: bool = False
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not (0.0 <= self.theta_lo < self.theta_hi <= np.pi):
            raise ValueError(
                f"need 0 <= theta_lo < theta_hi <= pi, got {self.theta_lo}, {self.theta_hi}"
            )
        ax = normalize(self.axis)
        object.__setattr__(self, "axis", tuple(float(c) for c in ax))

    @property
    def is_full(self):
        return False

    def colatitude(self, xyz):
        return np.arccos(np.clip(np.asarray(xyz, dtype=float) @ np.asarray(self.axis), -1.0, 1.0))

    @property
    def area(self):
        band = 2.0 * np.pi * (np.cos(self.theta_lo) - np.cos(self.theta_hi))
        return FOUR_PI - band if self.complement else band

    def complement_window(self):
        return BandWindow(self.theta_lo, self.theta_hi, not self.complement, self.axis)

    def contains(self, xyz):
        t = self.colatitude(xyz)
        inside = (t >= self.theta_lo) & (t <= self.theta_hi)
        if self.complement:
            # the band is removed as an open set so its bounding circles stay observed
            inside = (t <= self.theta_lo) | (t >= self.theta_hi)
        return inside

    def boundary_distance(self, xyz):
        """Geodesic distance from each point to the outside of the window.

        Negative values mean the point is not in the window. Boundary circles
        that degenerate to a pole (``theta_lo == 0`` or ``theta_hi == pi``)
        do not bound anything, so they are ignored.
        """
        t = self.colatitude(xyz)
        lo, hi = self.theta_lo, self.theta_hi
        if self.complement:
            gap = -np.minimum(t - lo, hi - t)
            return np.where(t <= lo, lo - t, np.where(t >= hi, t - hi, gap))
        d_lo = t - lo if lo > 0 else np.where(t >= lo, np.inf, t - lo)
        d_hi = hi - t if hi < np.pi else np.where(t <= hi, np.inf, hi - t)
        return np.minimum(d_lo, d_hi)

    def eroded_area(self, r):
        """Area of ``W (-) r``, the points whose radius-``r`` cap lies inside ``W``."""
        r = np.asarray(r, dtype=float)
        lo, hi = self.theta_lo, self.theta_hi
        if self.complement:
            top = np.maximum(lo - r, 0.0)
            bot = np.maximum(np.pi - hi - r, 0.0)
            out = 4.0 * np.pi * (np.sin(top / 2.0) ** 2 + np.sin(bot / 2.0) ** 2)
        else:
            a = lo + r if lo > 0 else np.zeros_like(r)
            b = hi - r if hi < np.pi else np.full_like(r, np.pi)
            out = np.where(b > a, 2.0 * np.pi * (np.cos(a) - np.cos(np.clip(b, 0.0, np.pi))), 0.0)
        return float(out) if out.ndim == 0 else out

    def erosion_contains(self, xyz, r):
        """True where the closed cap ``C(u, r)`` lies inside the window."""
        if np.any(np.asarray(r) < 0) or np.any(np.asarray(r) > np.pi):
            raise ValueError("r must lie in [0, pi]")
        return self.boundary_distance(xyz) >= r

    def sample_uniform(self, n, rng):
        """``n`` points uniform on the window."""
        if self.complement:
            z_top = (np.cos(self.theta_lo), 1.0)
            z_bot = (-1.0, np.cos(self.theta_hi))
            w_top = z_top[1] - z_top[0]
            w_bot = z_bot[1] - z_bot[0]
            u = rng.uniform(0.0, w_top + w_bot, size=n)
            z = np.where(u < w_top, z_top[0] + u, z_bot[0] + (u - w_top))
        else:
            z = rng.uniform(np.cos(self.theta_hi), np.cos(self.theta_lo), size=n)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        local = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        return local @ _frame(self.axis).T


@dataclass(frozen=True)
class FullSphere:
    """The whole sphere as an observation window."""

    @property
    def is_full(self):
        return True

    @property
    def area(self):
        return FOUR_PI

    def contains(self, xyz):
        return np.ones(np.atleast_2d(xyz).shape[0], dtype=bool)

    def boundary_distance(self, xyz):
        return np.full(np.atleast_2d(xyz).shape[0], np.inf)

    def eroded_area(self, r):
        r = np.asarray(r, dtype=float)
        out = np.full_like(r, FOUR_PI)
        return float(out) if out.ndim == 0 else out

    def erosion_contains(self, xyz, r):
        if np.any(np.asarray(r) < 0) or np.any(np.asarray(r) > np.pi):
            raise ValueError("r must lie in [0, pi]")
        return self.contains(xyz)

    def sample_uniform(self, n, rng):
        return uniform_on_sphere(n, rng)


def _frame(axis):
    """Rotation taking the z axis to ``axis``; columns are the new basis."""
    a = np.asarray(axis, dtype=float)
    if np.allclose(a, [0.0, 0.0, 1.0]):
        return np.eye(3)
    if np.allclose(a, [0.0, 0.0, -1.0]):
        return np.diag([1.0, -1.0, -1.0])
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = normalize(np.cross(helper, a))
    e2 = np.cross(a, e1)
    return np.column_stack([e1, e2, a])


def rotate_window(window, rotation):
    """Apply a rotation matrix to a window (full sphere is unchanged)."""
    if window.is_full:
        return window
    axis = np.asarray(rotation) @ np.asarray(window.axis)
    return BandWindow(window.theta_lo, window.theta_hi, window.complement, tuple(axis))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def fibonacci_lattice(n):
    """Golden-angle spiral of ``n`` quasi-uniform points, deterministic in ``n``."""
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = np.mod(GOLDEN_ANGLE * i, 2.0 * np.pi)
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


@dataclass(frozen=True, eq=False)
class GridMesh:
    """Grid nodes on the sphere with surface-measure weights (steradians)."""

    nodes: np.ndarray
    node_weights: np.ndarray
    _tree: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        nodes.setflags(write=False)
        weights = np.asarray(self.node_weights, dtype=float).copy()
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "node_weights", weights)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or len(nodes) == 0:
            raise ValueError("nodes must be a nonempty (n, 3) array")
        if weights.shape != (len(nodes),):
            raise ValueError("one weight per node required")

    def __len__(self):
        return len(self.nodes)

    @property
    def tree(self):
        if not self._tree:
            self._tree.append(cKDTree(self.nodes))
        return self._tree[0]


def build_grid(n_target):
    """Fibonacci-lattice mesh with ``n_target`` nodes of equal weight ``4 pi / n``."""
    n_target = int(n_target)
    if n_target < 12:
        raise ValueError("n_target must be at least 12")
    nodes = fibonacci_lattice(n_target)
    return GridMesh(nodes, np.full(n_target, FOUR_PI / n_target))


def nearest_node(mesh, u):
    """Index (or indices) of the node closest to ``u``; ties go to the lowest index."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    pts = np.atleast_2d(u)
    if len(mesh) <= LINEAR_SCAN_MAX:
        # argmax returns the first maximizer, i.e. the lowest index on ties
        idx = np.argmax(pts @ mesh.nodes.T, axis=1)
    else:
        idx = _nearest_tree(mesh, pts)
    return int(idx[0]) if single else idx


def _nearest_tree(mesh, pts):
    # chord distance is monotone in geodesic distance; query 2 neighbours to
    # resolve exact ties in favour of the lower index
    dist, idx = mesh.tree.query(pts, k=2)
    tie = np.isclose(dist[:, 0], dist[:, 1], rtol=0.0, atol=1e-15)
    best = np.where(tie, np.minimum(idx[:, 0], idx[:, 1]), idx[:, 0])
    return best.astype(np.intp)
