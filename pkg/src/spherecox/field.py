"""Gaussian random fields on a grid of the sphere.

The field is simulated exactly at the grid nodes from a factorization of the
covariance matrix and read off anywhere else from the nearest node, giving a
piecewise constant approximation of ``Y`` on the Voronoi cells of the grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .covariance import CovarianceModel, gram_matrix
from .geometry import GridMesh, nearest_node

MAX_NODES = 8192
CLAMP_RTOL = 1e-10
MAX_CLAMPED_TRACE = 0.10
EXP_GUARD = 700.0


class FieldOverflowError(ArithmeticError):
    """A field value is too large to exponentiate safely."""


class FactorizationError(np.linalg.LinAlgError):
    """The covariance matrix is too far from positive semidefinite."""


@dataclass(frozen=True)
class FieldSpec:
    """Mean function and covariance model of a Gaussian random field."""

    mean_fn: Callable[[np.ndarray], np.ndarray] | float
    model: CovarianceModel

    def mean_at(self, nodes):
        return evaluate_mean(self.mean_fn, nodes)


def evaluate_mean(mean_fn, nodes):
    nodes = np.atleast_2d(nodes)
    if callable(mean_fn):
        mu = np.asarray(mean_fn(nodes), dtype=float)
    else:
        mu = np.asarray(mean_fn, dtype=float)
    mu = np.broadcast_to(mu, (len(nodes),)).astype(float)
    if not np.all(np.isfinite(mu)):
        raise ValueError("mean function must be finite on the grid")
    return mu


@dataclass(frozen=True, eq=False)
class GridField:
    """One real value per node of a mesh."""

    mesh: GridMesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.mesh),):
            raise ValueError("need exactly one value per node")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to_csv(self, path):
        """Write ``node_index, x, y, z, value`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_index", "x", "y", "z", "value"])
            for i, (xyz, v) in enumerate(zip(self.mesh.nodes, self.values)):
                w.writerow([i, *(repr(float(c)) for c in xyz), repr(float(v))])


@dataclass(frozen=True, eq=False)
class FieldFactorization:
    """``factor @ factor.T`` approximates the covariance matrix over ``mesh.nodes``."""

    mesh: GridMesh
    factor: np.ndarray
    clamped_count: int
    variance: float = 1.0


def factorize_matrix(mesh, gram, variance=1.0):
    """Factor a given covariance matrix by symmetric eigendecomposition.

    Eigenvalues below ``1e-10 * variance`` are set to zero. More than 10% of
    the trace lost that way means the matrix is not numerically PSD.
    """
    gram = np.asarray(gram, dtype=float)
    n = len(mesh)
    if gram.shape != (n, n):
        raise ValueError("Gram matrix does not match mesh size")
    if n > MAX_NODES:
        raise ValueError(f"at most {MAX_NODES} nodes supported, got {n}")
    evals, evecs = np.linalg.eigh(0.5 * (gram + gram.T))
    clamp = evals < CLAMP_RTOL * variance
    trace = float(np.trace(gram))
    lost = float(np.sum(np.abs(evals[clamp])))
    if trace > 0 and lost > MAX_CLAMPED_TRACE * trace:
        raise FactorizationError(
            f"{clamp.sum()} eigenvalues clamped, {lost / trace:.1%} of the trace; "
            "covariance is not numerically positive semidefinite"
        )
    root = np.sqrt(np.where(clamp, 0.0, evals))
    factor = evecs * root
    factor.setflags(write=False)
    return FieldFactorization(mesh, factor, int(clamp.sum()), float(variance))


def factorize(mesh, model):
    """Factor the covariance matrix of ``model`` over the nodes of ``mesh``."""
    return factorize_matrix(mesh, gram_matrix(model, mesh.nodes), model.variance)


def sample_values(fact, mean_fn, rng, size=None):
    """Raw draws ``mu + L z``; shape ``(n,)`` or ``(size, n)``."""
    mu = evaluate_mean(mean_fn, fact.mesh.nodes)
    n = len(mu)
    if size is None:
        z = rng.standard_normal(n)
        return mu + fact.factor @ z
    z = rng.standard_normal((size, n))
    return mu + z @ fact.factor.T


def simulate_grf(fact, mean_fn, rng):
    """One realization of the field at the grid nodes."""
    return GridField(fact.mesh, sample_values(fact, mean_fn, rng))


def driving_intensity(field):
    """Nodewise ``exp`` of a field; refuses values above 700."""
    if np.any(field.values > EXP_GUARD):
        raise FieldOverflowError(f"field value {field.values.max():.1f} exceeds {EXP_GUARD}")
    return GridField(field.mesh, np.exp(field.values))


def field_at(field, u):
    """Value at the node nearest to ``u`` (one point or an array of points)."""
    return field.values[nearest_node(field.mesh, u)]


def spawn_rngs(seed, n):
    """Independent generators for ``n`` replicates derived from a root seed.

    Replicate ``i`` uses ``SeedSequence(seed).spawn(n)[i]``, so results do
    not depend on how replicates are scheduled.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
