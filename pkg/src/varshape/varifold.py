"""Discrete varifolds: weighted Dirac measures on position x unit-direction space.

A mesh cell (triangle or segment) becomes one atom ``w * delta_(x, v)`` where
x is the cell's center of mass, v its unit normal/tangent and w its area or
length. Pairing a measure with a test function h evaluates the sum
``sum_i w_i h(x_i, v_i)``, the discrete dual bracket.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.optimize import linprog

from .errors import (
    EmptyVarifold,
    MassMismatch,
    NonFiniteValue,
    NotSubmeasure,
    TooLarge,
)
from .mesh import PolylineGraph, TriMesh, all_segment_geometry, all_triangle_geometry

UNIT_TOL = 1e-9


def _check_support(positions, directions, weights):
    if len(positions) != len(directions) or len(positions) != len(weights):
        raise ValueError("positions, directions and weights must have equal length")
    if len(positions) == 0:
        raise EmptyVarifold("measure has no atoms")
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(directions)) and np.all(np.isfinite(weights))):
        raise ValueError("measure entries must be finite")


@dataclass(frozen=True)
class DiscreteVarifold:
    """Atoms: ``positions`` (m, n), unit ``directions`` (m, n), positive ``weights`` (m,)."""

    positions: np.ndarray
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        d = np.asarray(self.directions, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        _check_support(p, d, w)
        if np.abs(np.linalg.norm(d, axis=1) - 1.0).max() > UNIT_TOL:
            raise ValueError("directions must be unit vectors")
        if w.min() <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def supports(self) -> np.ndarray:
        """Concatenated (x, v) coordinates, shape (m, 2n)."""
        return np.concatenate([self.positions, self.directions], axis=1)


@dataclass(frozen=True)
class SpatialMeasure:
    """Marginal onto position space: ``positions`` (m, n) and ``weights`` (m,)."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        _check_support(p, p, w)
        if w.min() <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class DirectionalMeasure:
    """Marginal onto the unit sphere: unit ``directions`` (m, n) and ``weights`` (m,)."""

    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        _check_support(d, d, w)
        if np.abs(np.linalg.norm(d, axis=1) - 1.0).max() > UNIT_TOL:
            raise ValueError("directions must be unit vectors")
        if w.min() <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)


# ---------------------------------------------------------------------------
# construction


def from_mesh(mesh: TriMesh) -> DiscreteVarifold:
    """One atom per non-degenerate face, in face order.

    Raises
    ------
    EmptyVarifold
        When every face is degenerate.
    """
    centers, normals, areas, valid = all_triangle_geometry(mesh)
    if not valid.any():
        raise EmptyVarifold("all faces degenerate")
    return DiscreteVarifold(centers[valid], normals[valid], areas[valid])


def from_graph(graph: PolylineGraph) -> DiscreteVarifold:
    """One atom per non-degenerate edge, in edge order."""
    centers, tangents, lengths, valid = all_segment_geometry(graph)
    if not valid.any():
        raise EmptyVarifold("all edges degenerate")
    return DiscreteVarifold(centers[valid], tangents[valid], lengths[valid])


def concat(*measures: DiscreteVarifold) -> DiscreteVarifold:
    """Sum of measures: atom lists concatenated (shape-graph additivity)."""
    return DiscreteVarifold(
        np.concatenate([m.positions for m in measures]),
        np.concatenate([m.directions for m in measures]),
        np.concatenate([m.weights for m in measures]),
    )


# ---------------------------------------------------------------------------
# pairing and mass


def pair(mu: DiscreteVarifold, h) -> np.ndarray:
    """Dual pairing sum_i w_i h(x_i, v_i), accumulated in atom order.

    ``h(x, v)`` may return a scalar or a vector; the result keeps that shape.

    Raises
    ------
    NonFiniteValue
        If any evaluation of h is NaN or Inf.
    """
    values = np.array([np.asarray(h(x, v), dtype=np.float64) for x, v in zip(mu.positions, mu.directions)])
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("test function produced a non-finite value")
    if values.ndim == 1:
        return float(np.dot(mu.weights, values))
    return mu.weights @ values


def total_mass(mu) -> float:
    """Sum of weights; the total-variation norm of a positive measure."""
    return float(np.sum(mu.weights))


def normalize_mass(mu: DiscreteVarifold, target: float) -> DiscreteVarifold:
    """Rescale weights so the total mass equals ``target``; supports unchanged."""
    if target <= 0:
        raise ValueError("target mass must be positive")
    m = total_mass(mu)
    if m <= 0:
        raise EmptyVarifold("cannot normalize a massless measure")
    return DiscreteVarifold(mu.positions, mu.directions, mu.weights * (target / m))


def spatial_marginal(mu: DiscreteVarifold) -> SpatialMeasure:
    return SpatialMeasure(mu.positions, mu.weights)


def directional_marginal(mu: DiscreteVarifold) -> DirectionalMeasure:
    return DirectionalMeasure(mu.directions, mu.weights)


# ---------------------------------------------------------------------------
# distances used by the stability bounds


def tv_difference_submeasure(mu: DiscreteVarifold, nu: DiscreteVarifold) -> float:
    """Total-variation norm of mu - nu when nu's atoms nest inside mu's.

    ``nu`` must be a sub-list of ``mu`` (same atoms in the same order, some
    missing), as produced by face removal. The TV norm is then the summed
    weight of the removed atoms.

    Raises
    ------
    NotSubmeasure
        If the atom lists do not nest.
    """
    removed = 0.0
    j = 0
    mu_sup, nu_sup = mu.supports(), nu.supports()
    for i in range(mu.n_atoms):
        if (
            j < nu.n_atoms
            and mu.weights[i] == nu.weights[j]
            and np.array_equal(mu_sup[i], nu_sup[j])
        ):
            j += 1
        else:
            removed += mu.weights[i]
    if j != nu.n_atoms:
        raise NotSubmeasure("atoms of nu do not nest inside mu")
    return float(removed)


MAX_EXACT_OT_ATOMS = 256


def w1_small(mu: DiscreteVarifold, nu: DiscreteVarifold) -> float:
    """Exact 1-Wasserstein distance between two small probability measures.

    Ground cost is the Euclidean distance on concatenated (x, v) coordinates.
    Solves the transport linear program exactly (HiGHS); intended as a test
    oracle for the stability bounds, not a production path.

    Raises
    ------
    MassMismatch
        If either input's total mass differs from 1 by more than 1e-9.
    TooLarge
        If the combined support exceeds 256 atoms.
    """
    if abs(total_mass(mu) - 1.0) > 1e-9 or abs(total_mass(nu) - 1.0) > 1e-9:
        raise MassMismatch("w1_small expects probability measures")
    m, n = mu.n_atoms, nu.n_atoms
    if m + n > MAX_EXACT_OT_ATOMS:
        raise TooLarge(f"combined support {m + n} exceeds {MAX_EXACT_OT_ATOMS}")
    a, b = mu.supports(), nu.supports()
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    # transport polytope: rows sum to mu.weights, columns to nu.weights
    row = scipy.sparse.kron(scipy.sparse.eye(m), np.ones((1, n)))
    col = scipy.sparse.kron(np.ones((1, m)), scipy.sparse.eye(n))
    a_eq = scipy.sparse.vstack([row, col]).tocsr()
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


# ---------------------------------------------------------------------------
# serialization (debugging / test fixtures)


def to_json(mu: DiscreteVarifold) -> str:
    return json.dumps({
        "n": mu.dim,
        "positions": mu.positions.tolist(),
        "directions": mu.directions.tolist(),
        "weights": mu.weights.tolist(),
    })


def from_json(text: str) -> DiscreteVarifold:
    data = json.loads(text)
    mu = DiscreteVarifold(
        np.array(data["positions"], dtype=np.float64),
        np.array(data["directions"], dtype=np.float64),
        np.array(data["weights"], dtype=np.float64),
    )
    if mu.dim != data["n"]:
        raise ValueError("dimension field inconsistent with positions")
    return mu
