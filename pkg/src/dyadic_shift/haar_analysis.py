"""Haar functions, conditional expectations and martingale differences.

Functions on the cloud are plain arrays: shape ``(n,)`` for scalar values
or ``(n, d)`` for values in a ``d``-dimensional normed space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dyadic_cubes import Cube, DyadicSystem
from .metric_core import Measure


@dataclass(frozen=True)
class NormedSpaceE:
    """``R^d`` with the coordinate ``l^q`` norm and configured type/cotype."""

    d: int = 1
    q: float = 2.0
    type_: float | None = None
    cotype: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if not self.q >= 1:
            raise ValueError("q must be at least 1")
        t = min(self.q, 2.0) if self.type_ is None else self.type_
        c = max(self.q, 2.0) if self.cotype is None else self.cotype
        if not (1 <= t <= 2 and c >= 2):
            raise ValueError("type must lie in [1, 2] and cotype in [2, inf]")
        object.__setattr__(self, "type_", float(t))
        object.__setattr__(self, "cotype", float(c))

    @property
    def is_hilbert(self) -> bool:
        return self.q == 2 or self.d == 1

    def norm(self, values: np.ndarray) -> np.ndarray:
        """Norm along the last axis (scalars: absolute value)."""
        v = np.asarray(values, dtype=float)
        if v.ndim == 0 or self.d == 1 and v.shape[-1:] != (1,):
            return np.abs(v)
        if math.isinf(self.q):
            return np.max(np.abs(v), axis=-1)
        if self.q == 2:
            return np.sqrt(np.sum(v * v, axis=-1))
        if self.q == 1:
            return np.sum(np.abs(v), axis=-1)
        return np.sum(np.abs(v) ** self.q, axis=-1) ** (1 / self.q)


@dataclass(frozen=True, eq=False)
class HaarFunction:
    level: int
    index: int
    theta: int
    children: tuple[int, ...]
    values: np.ndarray  # one value per child, in ``children`` order

    @property
    def key(self) -> tuple[int, int]:
        return (self.level, self.index)


@dataclass(eq=False)
class HaarSystem:
    system: DyadicSystem
    mu: Measure
    functions: dict[tuple[int, int], list[HaarFunction]]
    _matrix: sp.csc_matrix | None = field(default=None, repr=False)

    @property
    def cubes(self) -> list[tuple[int, int]]:
        return sorted(self.functions)

    def function(self, key, theta: int = 1) -> HaarFunction:
        return self.functions[tuple(key)][theta - 1]

    @property
    def columns(self) -> list[tuple[int, int, int]]:
        """``(level, index, theta)`` for every Haar function, in matrix column order."""
        return [(k, a, h.theta) for (k, a) in self.cubes for h in self.functions[(k, a)]]

    @property
    def column_of(self) -> dict[tuple[int, int, int], int]:
        return {c: i for i, c in enumerate(self.columns)}

    def evaluate(self, h: HaarFunction) -> np.ndarray:
        out = np.zeros(self.system.cloud.n)
        for b, v in zip(h.children, h.values):
            out[self.system.members(h.level + 1, b)] = v
        return out

    @property
    def matrix(self) -> sp.csc_matrix:
        """Synthesis matrix, one column per Haar function."""
        if self._matrix is None:
            rows, cols, vals = [], [], []
            for col, (k, a, theta) in enumerate(self.columns):
                h = self.functions[(k, a)][theta - 1]
                for b, v in zip(h.children, h.values):
                    ids = self.system.members(k + 1, b)
                    rows.append(ids)
                    cols.append(np.full(ids.size, col))
                    vals.append(np.full(ids.size, v))
            n = self.system.cloud.n
            if rows:
                self._matrix = sp.csc_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(n, len(self.columns)))
            else:
                self._matrix = sp.csc_matrix((n, 0))
        return self._matrix

    def gram(self) -> np.ndarray:
        H = self.matrix
        return (H.T @ sp.diags(self.mu.weights) @ H).toarray()

    def to_json(self) -> dict:
        return {"functions": [
            {"level": h.level, "index": h.index, "theta": h.theta,
             "children": list(h.children), "values": h.values.tolist()}
            for key in self.cubes for h in self.functions[key]]}


def _branch_values(masses: np.ndarray) -> np.ndarray:
    """Rows: orthonormal mean-zero vectors in ``L^2`` of the child masses.

    Gram-Schmidt on the constant followed by child indicators 1..n-1.
    """
    n = masses.size
    basis = [np.ones(n) / math.sqrt(masses.sum())]
    rows = []
    for c in range(n - 1):
        v = np.zeros(n)
        v[c] = 1.0
        for _ in range(2):  # re-orthogonalise once for stability
            for u in basis:
                v = v - np.sum(v * u * masses) * u
        v = v / math.sqrt(np.sum(v * v * masses))
        basis.append(v)
        rows.append(v)
    return np.array(rows).reshape(n - 1, n)


def build_haar_system(system: DyadicSystem, mu: Measure) -> HaarSystem:
    """``n(Q) - 1`` Haar functions for every cube with ``n(Q) >= 2`` children."""
    functions = {}
    for Q in system.cubes():
        if len(Q.children) < 2:
            continue
        masses = np.array([mu.of(system.members(Q.level + 1, b)) for b in Q.children])
        vals = _branch_values(masses)
        functions[Q.key] = [HaarFunction(Q.level, Q.index, t + 1, Q.children, vals[t])
                            for t in range(len(vals))]
    return HaarSystem(system, mu, functions)


# --- conditional expectation -----------------------------------------------------

def _as_labels(partition, n: int) -> np.ndarray:
    if isinstance(partition, np.ndarray) and partition.ndim == 1 and partition.size == n:
        labels = partition.astype(np.int64)
        if np.any(labels < 0):
            raise ValueError("labels must be nonnegative")
        return labels
    labels = np.full(n, -1, dtype=np.int64)
    for i, part in enumerate(partition):
        ids = np.asarray(list(part), dtype=int)
        if np.any(labels[ids] >= 0) or np.unique(ids).size != ids.size:
            raise ValueError("partition parts overlap")
        labels[ids] = i
    if np.any(labels < 0):
        raise ValueError("partition does not cover the cloud")
    return labels


def conditional_expectation(f: np.ndarray, partition, mu: Measure) -> np.ndarray:
    """Replace ``f`` on every part by its ``mu``-average.

    ``partition`` is a list of id sets or a label array. Averages are taken
    relative to one representative value per part, so a function that is
    already constant on the parts comes back bit-for-bit unchanged.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    labels = _as_labels(partition, n)
    n_parts = int(labels.max()) + 1
    w = mu.weights
    first = np.full(n_parts, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    ref = f[first[labels]]
    dev = (f - ref) * (w if f.ndim == 1 else w[:, None])
    mass = np.bincount(labels, weights=w, minlength=n_parts)
    if f.ndim == 1:
        corr = np.bincount(labels, weights=dev, minlength=n_parts) / mass
    else:
        corr = np.stack([np.bincount(labels, weights=dev[:, j], minlength=n_parts)
                         for j in range(f.shape[1])], axis=1) / mass[:, None]
    return ref + corr[labels]


def martingale_differences(f: np.ndarray, system: DyadicSystem, mu: Measure) -> list[np.ndarray]:
    """``d_k = E[f | D^k] - E[f | D^(k-1)]``; the first entry is ``E[f | D^k_min]``."""
    expectations = [conditional_expectation(f, system.labels_at(k), mu) for k in system.level_range]
    return [expectations[0]] + [b - a for a, b in zip(expectations, expectations[1:])]


# --- expansion ------------------------------------------------------------------

@dataclass
class HaarExpansion:
    coefficients: dict[tuple[int, int, int], np.ndarray]  # (level, index, theta) -> x in E
    top_averages: np.ndarray  # one row per top-level cube


def expand(f: np.ndarray, haar: HaarSystem) -> HaarExpansion:
    """Coefficients ``x_Q = int f h_Q dmu`` for every branch, plus top-level averages."""
    system = haar.system
    if any(system.members(system.k_max, a).size != 1 for a in range(system.n_cubes(system.k_max))):
        raise ValueError("bottom level must consist of singletons for a complete expansion")
    f = np.asarray(f, dtype=float)
    weighted = f * (haar.mu.weights if f.ndim == 1 else haar.mu.weights[:, None])
    coeffs = haar.matrix.T @ weighted
    top = system.labels_at(system.k_min)
    avg = conditional_expectation(f, top, haar.mu)
    first = [int(system.members(system.k_min, a)[0]) for a in range(system.n_cubes(system.k_min))]
    return HaarExpansion({c: np.asarray(coeffs[i]) for i, c in enumerate(haar.columns)},
                         avg[first])


def reconstruct(expansion: HaarExpansion, haar: HaarSystem) -> np.ndarray:
    system = haar.system
    top = system.labels_at(system.k_min)
    out = np.array(expansion.top_averages[top], dtype=float)
    col = haar.column_of
    if expansion.coefficients:
        x = np.zeros((len(col),) + out.shape[1:])
        for key, value in expansion.coefficients.items():
            x[col[tuple(key)]] = value
        out = out + haar.matrix @ x
    return out


# --- envelope ---------------------------------------------------------------------

@dataclass
class EnvelopeReport:
    max_upper: float  # max over cubes of ||h_Q||_inf mu(Q)^(1/2)
    min_upper: float
    min_lower: float  # min over cubes of max_children |v_c| mu(child)^(1/2)
    budget: float

    @property
    def ok(self) -> bool:
        return (self.max_upper <= self.budget and self.min_upper >= 1 / self.budget
                and self.min_lower >= 1 / self.budget)


def haar_envelope_check(haar: HaarSystem, budget: float = 8.0, theta: int | None = 1
                        ) -> EnvelopeReport:
    """Extreme envelope ratios; ``theta=None`` scans every branch."""
    system, mu = haar.system, haar.mu
    uppers, lowers = [], []
    for key in haar.cubes:
        Q = system.cube(*key)
        mass_q = mu.of(Q.members)
        child_mass = np.array([mu.of(system.members(Q.level + 1, b)) for b in Q.children])
        hs = haar.functions[key] if theta is None else [haar.functions[key][theta - 1]]
        for h in hs:
            uppers.append(np.max(np.abs(h.values)) * math.sqrt(mass_q))
            lowers.append(np.max(np.abs(h.values) * np.sqrt(child_mass)))
    if not uppers:
        return EnvelopeReport(1.0, 1.0, 1.0, budget)
    return EnvelopeReport(float(max(uppers)), float(min(uppers)), float(min(lowers)), budget)
