"""Finite metric measure spaces, separated nets and doubling estimates.

A :class:`PointCloud` stands in for the metric space. Points are dense integer
ids ``0..n-1``; distances come either from coordinates (Euclidean on a line or
in the plane, or periodic on the unit torus) or from an explicit matrix.
Balls are open, ``B(x, r) = {y : d(x, y) < r}``.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

TOPOLOGIES = ("line", "torus", "general")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite metric space on ids ``0..n-1``.

    ``coords`` has shape ``(n, dim)``; with ``topology="torus"`` every
    coordinate is read modulo 1. ``dist`` is used instead of coordinates when
    ``topology="general"``.
    """

    coords: np.ndarray | None = None
    dist: np.ndarray | None = None
    topology: str = "line"

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == "general":
            if self.dist is None:
                raise ValueError("general topology needs an explicit distance matrix")
            d = np.asarray(self.dist, dtype=float)
            if d.ndim != 2 or d.shape[0] != d.shape[1]:
                raise ValueError("distance matrix must be square")
            if not np.array_equal(d, d.T) or np.any(np.diag(d) != 0) or np.any(d < 0):
                raise ValueError("distance matrix must be symmetric, nonnegative, zero on the diagonal")
            object.__setattr__(self, "dist", d)
        else:
            if self.coords is None:
                raise ValueError(f"{self.topology} topology needs coordinates")
            c = np.asarray(self.coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if self.topology == "torus":
                c = np.mod(c, 1.0)
            object.__setattr__(self, "coords", c)
        for arr in (self.coords, self.dist):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.dist.shape[0] if self.topology == "general" else self.coords.shape[0]

    def __len__(self):
        return self.n

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def pairwise(self, rows=None, cols=None) -> np.ndarray:
        """Distance block ``d(rows[i], cols[j])``; ``None`` means all ids."""
        rows = self.ids if rows is None else np.asarray(rows, dtype=int)
        cols = self.ids if cols is None else np.asarray(cols, dtype=int)
        if self.topology == "general":
            return self.dist[np.ix_(rows, cols)]
        diff = np.abs(self.coords[rows][:, None, :] - self.coords[cols][None, :, :])
        if self.topology == "torus":
            diff = np.minimum(diff, 1.0 - diff)
        if diff.shape[2] == 1:
            return diff[:, :, 0]
        return np.sqrt(np.sum(diff * diff, axis=2))

    def dist_from(self, i: int, cols=None) -> np.ndarray:
        return self.pairwise([i], cols)[0]

    def d(self, i: int, j: int) -> float:
        return float(self.pairwise([i], [j])[0, 0])

    def ball(self, center: int, radius: float) -> np.ndarray:
        """Ids in the open ball ``B(center, radius)``."""
        return np.flatnonzero(self.dist_from(center) < radius)

    def min_positive_distance(self) -> float:
        best = math.inf
        for start in range(0, self.n, 512):
            block = self.pairwise(np.arange(start, min(start + 512, self.n)))
            pos = block[block > 0]
            if pos.size:
                best = min(best, float(pos.min()))
        return best

    def diameter(self) -> float:
        best = 0.0
        for start in range(0, self.n, 512):
            block = self.pairwise(np.arange(start, min(start + 512, self.n)))
            best = max(best, float(block.max()))
        return best

    def is_uniform_torus_grid(self) -> bool:
        if self.topology != "torus" or self.coords.shape[1] != 1:
            return False
        n = self.n
        return bool(np.all(self.coords[:, 0] * n == np.arange(n)))

    def check_metric(self, samples: int = 10_000, seed: int = 0) -> bool:
        """Symmetry, zero diagonal and the triangle inequality.

        Full check for ``n <= 64``, otherwise ``samples`` random triples.
        """
        n = self.n
        if n <= 64:
            d = self.pairwise()
            if np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
                return False
            lhs = d[:, None, :]
            rhs = d[:, :, None] + d[None, :, :]
            return bool(np.all(lhs <= rhs + 1e-12))
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, n, size=(3, samples))
        dij = self._pairs(i, j)
        if np.any(self._pairs(i, i) != 0) or not np.array_equal(dij, self._pairs(j, i)):
            return False
        return bool(np.all(self._pairs(i, k) <= dij + self._pairs(j, k) + 1e-12))

    def _pairs(self, a, b) -> np.ndarray:
        if self.topology == "general":
            return self.dist[a, b]
        diff = np.abs(self.coords[a] - self.coords[b])
        if self.topology == "torus":
            diff = np.minimum(diff, 1.0 - diff)
        return np.sqrt(np.sum(diff * diff, axis=1))


def torus_grid(g: int) -> PointCloud:
    """Uniform grid ``{i / 2**g}`` on the unit circle."""
    n = 2**g
    return PointCloud(coords=np.arange(n) / n, topology="torus")


def line_grid(n: int) -> PointCloud:
    """``{i / n : i < n}`` with the absolute-value metric."""
    return PointCloud(coords=np.arange(n) / n, topology="line")


def random_cloud(n: int, dim: int = 2, seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(coords=rng.random((n, dim)), topology="line")


@dataclass(frozen=True, eq=False)
class Measure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("measure weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int, total: float = 1.0) -> "Measure":
        return cls(np.full(n, total / n))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def of(self, ids) -> float:
        return float(self.weights[np.asarray(ids, dtype=int)].sum())


def measure_doubling_ratio(cloud: PointCloud, mu: Measure) -> float:
    """Largest ``mu(B(x, 2r)) / mu(B(x, r))`` over data centres and realised radii."""
    worst = 1.0
    for x in range(cloud.n):
        dx = cloud.dist_from(x)
        order = np.argsort(dx, kind="stable")
        sd = dx[order]
        cum = np.concatenate([[0.0], np.cumsum(mu.weights[order])])
        radii = np.unique(sd[sd > 0])
        # mass of the open ball of radius r = cum[#points with d < r]
        inner = cum[np.searchsorted(sd, radii, side="left")]
        outer = cum[np.searchsorted(sd, 2 * radii, side="left")]
        worst = max(worst, float(np.max(outer / inner)) if radii.size else 1.0)
    return worst


@dataclass(frozen=True)
class SeparatedSet:
    members: tuple[int, ...]
    delta: float
    maximal: bool = True

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, item):
        return item in set(self.members)


def _order(cloud: PointCloud, order) -> np.ndarray:
    if order is None:
        return cloud.ids
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(cloud.n)):
        raise ValueError("order must be a permutation of the point ids")
    return order


def _greedy_extend(cloud: PointCloud, delta: float, candidates, forced=()) -> list[int]:
    kept = list(forced)
    covered = np.zeros(cloud.n, dtype=bool)
    for z in kept:
        covered |= cloud.dist_from(z) < delta
    for x in candidates:
        if covered[x]:
            continue
        kept.append(int(x))
        covered |= cloud.dist_from(x) < delta
    return kept


def greedy_maximal_separated(cloud: PointCloud, delta: float, order=None) -> SeparatedSet:
    """Keep each point (in ``order``) that is at least ``delta`` from all kept points."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    kept = _greedy_extend(cloud, delta, _order(cloud, order))
    return SeparatedSet(tuple(sorted(kept)), float(delta), True)


def is_separated(cloud: PointCloud, ids, delta: float) -> bool:
    ids = np.asarray(list(ids), dtype=int)
    if ids.size < 2:
        return True
    d = cloud.pairwise(ids, ids)
    np.fill_diagonal(d, np.inf)
    return bool(np.all(d >= delta))


def is_maximal(cloud: PointCloud, ids, delta: float) -> bool:
    ids = np.asarray(list(ids), dtype=int)
    if ids.size == 0:
        return cloud.n == 0
    return bool(np.all(cloud.pairwise(ids).min(axis=0) < delta))


def packing_count(cloud: PointCloud, ids, radius: float) -> int:
    """Max number of points of ``ids`` inside one open ball of ``radius`` centred in ``ids``."""
    ids = np.asarray(list(ids), dtype=int)
    if ids.size == 0:
        return 0
    return int(np.max(np.sum(cloud.pairwise(ids, ids) < radius, axis=1)))


def split_separated(cloud: PointCloud, Z: SeparatedSet | Sequence[int], D1: float,
                    D2: float) -> list[SeparatedSet]:
    """Split a ``D1``-separated set into disjoint ``D2``-separated parts.

    Maximal ``D2``-separated subsets are peeled off greedily (ascending id)
    until nothing is left. The part count never exceeds
    ``packing_count(cloud, Z, D2)``.
    """
    if not 0 < D1 <= D2:
        raise ValueError("need 0 < D1 <= D2")
    members = sorted(int(z) for z in Z)
    if not is_separated(cloud, members, D1):
        raise ValueError(f"input set is not {D1}-separated")
    parts = []
    remaining = members
    while remaining:
        rem = np.asarray(remaining)
        block = cloud.pairwise(rem, rem)
        taken = np.zeros(rem.size, dtype=bool)
        blocked = np.zeros(rem.size, dtype=bool)
        for i in range(rem.size):
            if not blocked[i]:
                taken[i] = True
                blocked |= block[i] < D2
        parts.append(SeparatedSet(tuple(rem[taken].tolist()), float(D2), False))
        remaining = rem[~taken].tolist()
    return parts


@dataclass(frozen=True)
class NestedNets:
    delta: float
    k_min: int
    k_max: int
    levels: tuple[SeparatedSet, ...]

    def __getitem__(self, k: int) -> SeparatedSet:
        if not self.k_min <= k <= self.k_max:
            raise KeyError(k)
        return self.levels[k - self.k_min]

    @property
    def level_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "levels": {str(k): list(self[k].members) for k in self.level_range},
        }

    @classmethod
    def from_json(cls, data: dict) -> "NestedNets":
        delta, k_min, k_max = float(data["delta"]), int(data["k_min"]), int(data["k_max"])
        levels = tuple(
            SeparatedSet(tuple(int(i) for i in data["levels"][str(k)]), delta**k, True)
            for k in range(k_min, k_max + 1)
        )
        return cls(delta, k_min, k_max, levels)

    def is_nested(self) -> bool:
        return all(set(self[k].members) <= set(self[k + 1].members)
                   for k in range(self.k_min, self.k_max))


def default_levels(cloud: PointCloud, delta: float) -> tuple[int, int]:
    """Level range whose top net is one point and whose bottom net is the whole cloud."""
    diam = cloud.diameter()
    k_min = 0
    while delta**k_min <= diam:
        k_min -= 1
    gap = cloud.min_positive_distance()
    k_max = k_min
    if math.isfinite(gap):
        while delta**k_max > gap:
            k_max += 1
    return min(k_min, 0), max(k_max, 0)


def build_nested_nets(cloud: PointCloud, delta: float, k_min: int, k_max: int,
                      order=None) -> NestedNets:
    """Maximal ``delta**k``-separated nets with ``A_k`` contained in ``A_{k+1}``.

    Each finer net starts from the coarser one and is greedily extended in
    ``order``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if k_min > k_max:
        raise ValueError("k_min must not exceed k_max")
    order = _order(cloud, order)
    levels = []
    forced: list[int] = []
    for k in range(k_min, k_max + 1):
        forced = _greedy_extend(cloud, delta**k, order, forced)
        levels.append(SeparatedSet(tuple(sorted(forced)), delta**k, True))
    return NestedNets(float(delta), k_min, k_max, tuple(levels))


def boundary_layer(cloud: PointCloud, A: Iterable[int], eps: float) -> set[int]:
    """Points within ``eps`` of the other side of ``A``, on either side."""
    inside = np.zeros(cloud.n, dtype=bool)
    inside[np.asarray(list(A), dtype=int)] = True
    if inside.all() or not inside.any():
        return set()
    a, ac = np.flatnonzero(inside), np.flatnonzero(~inside)
    d = cloud.pairwise(a, ac)
    layer = a[d.min(axis=1) < eps].tolist() + ac[d.min(axis=0) < eps].tolist()
    return set(layer)


# --- doubling constant -------------------------------------------------------

def _cover_bounds(cover_sets: np.ndarray) -> tuple[int, int]:
    """Greedy upper bound and greedy-packing lower bound for a set cover.

    ``cover_sets[c, t]`` says candidate ``c`` covers target ``t``.
    """
    n_t = cover_sets.shape[1]
    left = np.ones(n_t, dtype=bool)
    upper = 0
    while left.any():
        gain = cover_sets[:, left].sum(axis=1)
        upper += 1
        left &= ~cover_sets[int(np.argmax(gain))]
    # targets no single candidate covers together need separate candidates
    lower, blocked = 0, np.zeros(n_t, dtype=bool)
    together = cover_sets.T.astype(np.int32) @ cover_sets.astype(np.int32) > 0
    for t in range(n_t):
        if not blocked[t]:
            lower += 1
            blocked |= together[t]
    return upper, lower


def _exact_cover(cover_sets: np.ndarray) -> int:
    n_c = cover_sets.shape[0]
    res = milp(
        c=np.ones(n_c),
        constraints=LinearConstraint(cover_sets.T.astype(float), lb=1, ub=np.inf),
        integrality=np.ones(n_c),
        bounds=Bounds(0, 1),
    )
    if not res.success:
        raise RuntimeError(f"set cover solver failed: {res.message}")
    return int(round(res.fun))


@dataclass
class DoublingReport:
    M: int
    balls_checked: int
    balls_total: int
    exact: bool

    @property
    def coverage(self) -> float:
        return self.balls_checked / self.balls_total if self.balls_total else 1.0


def estimate_doubling_constant(cloud: PointCloud, exhaustive_limit: int = 128,
                               samples: int = 2000, seed: int = 0,
                               full: bool = False):
    """Smallest M covering every data ball by M data balls of half the radius.

    Balls are centred at data points with realised pairwise distances as
    radii, read as closed balls (the limit of open balls with radius slightly
    above the realised distance). Every ball is checked when
    ``n <= exhaustive_limit``; otherwise ``samples`` balls are drawn.
    """
    n = cloud.n
    balls: list[tuple[int, float]] = []
    if n <= exhaustive_limit:
        for x in range(n):
            radii = np.unique(cloud.dist_from(x))
            balls.extend((x, float(r)) for r in radii[radii > 0])
        total = len(balls)
    else:
        rng = np.random.default_rng(seed)
        xs = rng.integers(0, n, size=samples)
        ys = rng.integers(0, n, size=samples)
        total = n * (n - 1)
        for x, y in zip(xs, ys):
            r = cloud.d(int(x), int(y))
            if r > 0:
                balls.append((int(x), r))
    best = 1
    pending = []
    for x, r in balls:
        target = np.flatnonzero(cloud.dist_from(x) <= r)
        if target.size <= best:
            continue
        cover = cloud.pairwise(None, target) <= r / 2
        cover = cover[cover.any(axis=1)]
        upper, lower = _cover_bounds(cover)
        best = max(best, lower)
        if upper > lower:
            pending.append((upper, cover))
    pending.sort(key=lambda item: -item[0])
    for upper, cover in pending:
        if upper > best:
            best = max(best, _exact_cover(cover))
    report = DoublingReport(best, len(balls), total, n <= exhaustive_limit)
    return report if full else best


def brute_force_cover_number(cloud: PointCloud, x: int, r: float) -> int:
    """Exhaustive subset search; only for tiny clouds."""
    target = set(np.flatnonzero(cloud.dist_from(x) <= r).tolist())
    sets = [set(np.flatnonzero(cloud.dist_from(c) <= r / 2).tolist()) & target
            for c in range(cloud.n)]
    for size in range(1, len(target) + 1):
        for combo in itertools.combinations(range(cloud.n), size):
            if set().union(*(sets[c] for c in combo)) == target:
                return size
    return len(target)


# --- ingestion ---------------------------------------------------------------

def load_cloud(path: str | Path, topology: str | None = None) -> PointCloud:
    """Read a cloud from CSV (``id,x1,...,xd``) or JSON (``{"dist": [[...]]}``)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if "dist" in data:
            return PointCloud(dist=np.asarray(data["dist"], dtype=float), topology="general")
        return PointCloud(coords=np.asarray(data["coords"], dtype=float),
                          topology=topology or data.get("topology", "line"))
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    rows.sort(key=lambda row: int(row[0]))
    ids = [int(row[0]) for row in rows]
    if ids != list(range(len(ids))):
        raise ValueError("CSV ids must be dense integers 0..n-1")
    coords = np.array([[float(v) for v in row[1:]] for row in rows])
    return PointCloud(coords=coords, topology=topology or "line")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True
