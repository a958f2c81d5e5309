"""Dyadic cube systems over a finite point cloud.

A system stores, for every level ``k`` in ``[k_min, k_max]``, a label array
mapping each point id to the index of the level-``k`` cube containing it, the
centre id of each cube and the index of its parent one level up. Cubes are
therefore extensional: a cube *is* its member set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .metric_core import NestedNets, PointCloud


@dataclass(frozen=True, eq=False)
class Cube:
    level: int
    index: int
    center: int
    parent: int | None
    children: tuple[int, ...]
    members: np.ndarray

    @property
    def key(self) -> tuple[int, int]:
        return (self.level, self.index)

    def __len__(self):
        return len(self.members)

    def __repr__(self):
        return f"Cube(level={self.level}, index={self.index}, center={self.center}, size={len(self)})"


@dataclass(eq=False)
class DyadicSystem:
    cloud: PointCloud
    delta: float
    k_min: int
    labels: list[np.ndarray]
    centers: list[np.ndarray]
    parents: list[np.ndarray]
    # set for systems built from shifted torus intervals: {"base", "offset", "n"}
    canonical: dict | None = None
    _cubes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for arrays in (self.labels, self.centers, self.parents):
            for a in arrays:
                a.setflags(write=False)

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.labels) - 1

    @property
    def level_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def has_level(self, k: int) -> bool:
        return self.k_min <= k <= self.k_max

    def _i(self, k: int) -> int:
        if not self.has_level(k):
            raise IndexError(f"level {k} outside [{self.k_min}, {self.k_max}]")
        return k - self.k_min

    def labels_at(self, k: int) -> np.ndarray:
        return self.labels[self._i(k)]

    def centers_at(self, k: int) -> np.ndarray:
        return self.centers[self._i(k)]

    def parents_at(self, k: int) -> np.ndarray:
        return self.parents[self._i(k)]

    def n_cubes(self, k: int) -> int:
        return len(self.centers_at(k))

    @property
    def total_cubes(self) -> int:
        return sum(len(c) for c in self.centers)

    def side(self, k: int) -> float:
        """``l(Q) = delta**k``."""
        return self.delta**k

    @cached_property
    def _members(self) -> list[list[np.ndarray]]:
        out = []
        for lab, cen in zip(self.labels, self.centers):
            order = np.argsort(lab, kind="stable")
            bounds = np.searchsorted(lab[order], np.arange(len(cen) + 1))
            out.append([order[bounds[a]:bounds[a + 1]] for a in range(len(cen))])
        return out

    @cached_property
    def _children(self) -> list[list[tuple[int, ...]]]:
        out = []
        for i in range(len(self.labels)):
            kids: list[list[int]] = [[] for _ in range(len(self.centers[i]))]
            if i + 1 < len(self.labels):
                finer_centers = self.centers[i + 1]
                for b in np.argsort(finer_centers, kind="stable"):
                    kids[self.parents[i + 1][b]].append(int(b))
            out.append([tuple(k) for k in kids])
        return out

    def members(self, k: int, index: int) -> np.ndarray:
        return self._members[self._i(k)][index]

    def cube(self, k: int, index: int) -> Cube:
        key = (k, index)
        if key not in self._cubes:
            i = self._i(k)
            parent = None if k == self.k_min else int(self.parents[i][index])
            self._cubes[key] = Cube(k, index, int(self.centers[i][index]), parent,
                                    self._children[i][index], self._members[i][index])
        return self._cubes[key]

    def cubes(self, k: int | None = None):
        levels = self.level_range if k is None else [k]
        for lev in levels:
            for a in range(self.n_cubes(lev)):
                yield self.cube(lev, a)

    def cube_containing(self, point: int, k: int) -> Cube:
        return self.cube(k, int(self.labels_at(k)[point]))

    def children(self, Q: Cube) -> list[Cube]:
        """Children ordered by centre id."""
        return [self.cube(Q.level + 1, b) for b in Q.children]

    def ball_radius(self, k: int) -> float:
        """Radius of ``B_Q = B(x_Q, 3 delta**k)``."""
        return 3.0 * self.delta**k

    # --- export ----------------------------------------------------------

    def to_json(self) -> dict:
        cubes = []
        for Q in self.cubes():
            cubes.append({"level": Q.level, "index": Q.index, "center": Q.center,
                          "parent": Q.parent, "members": Q.members.tolist()})
        out = {"delta": self.delta, "k_min": self.k_min, "k_max": self.k_max,
               "n": self.cloud.n, "cubes": cubes}
        if self.canonical is not None:
            out["canonical"] = self.canonical
        return out

    @classmethod
    def from_json(cls, data: dict, cloud: PointCloud) -> "DyadicSystem":
        k_min, k_max = int(data["k_min"]), int(data["k_max"])
        n = cloud.n
        per_level: dict[int, list[dict]] = {k: [] for k in range(k_min, k_max + 1)}
        for c in data["cubes"]:
            per_level[int(c["level"])].append(c)
        labels, centers, parents = [], [], []
        for k in range(k_min, k_max + 1):
            cubes = sorted(per_level[k], key=lambda c: c["index"])
            lab = np.full(n, -1, dtype=np.int64)
            for c in cubes:
                lab[np.asarray(c["members"], dtype=int)] = int(c["index"])
            if np.any(lab < 0):
                raise ValueError(f"level {k} does not cover the cloud")
            labels.append(lab)
            centers.append(np.array([int(c["center"]) for c in cubes], dtype=np.int64))
            parents.append(np.array([-1 if c["parent"] is None else int(c["parent"])
                                     for c in cubes], dtype=np.int64))
        return cls(cloud, float(data["delta"]), k_min, labels, centers, parents,
                   data.get("canonical"))


def _closest(cloud: PointCloud, sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Index into ``targets`` of the nearest target for each source; ties go to the smaller id."""
    order = np.argsort(targets, kind="stable")
    out = np.empty(len(sources), dtype=np.int64)
    for start in range(0, len(sources), 1024):
        block = cloud.pairwise(sources[start:start + 1024], targets[order])
        out[start:start + 1024] = order[np.argmin(block, axis=1)]
    return out


def build_dyadic_system(cloud: PointCloud, nets: NestedNets) -> DyadicSystem:
    """Cubes from nested nets by the closest-centre rule.

    Every point goes to its nearest bottom-level centre; every level-``k+1``
    centre goes to its nearest level-``k`` centre (itself when it persists).
    A cube's members are the points whose chain passes through it.
    """
    if not nets.is_nested():
        raise ValueError("nets are not nested")
    levels = list(nets.level_range)
    centers = [np.asarray(nets[k].members, dtype=np.int64) for k in levels]

    parents = [np.full(len(centers[0]), -1, dtype=np.int64)]
    for i in range(1, len(levels)):
        fine, coarse = centers[i], centers[i - 1]
        pos = {int(z): a for a, z in enumerate(coarse)}
        par = _closest(cloud, fine, coarse)
        for b, z in enumerate(fine):
            if int(z) in pos:
                par[b] = pos[int(z)]
        parents.append(par)

    bottom = centers[-1]
    lab = _closest(cloud, cloud.ids, bottom)
    lab[bottom] = np.arange(len(bottom))
    labels = [lab]
    for i in range(len(levels) - 1, 0, -1):
        labels.append(parents[i][labels[-1]])
    labels.reverse()
    return DyadicSystem(cloud, nets.delta, nets.k_min, labels, centers, parents)


def canonical_torus_system(cloud: PointCloud, delta: float, k_min: int = 0,
                           k_max: int | None = None, offset: tuple[int, int] = (0, 1)
                           ) -> DyadicSystem:
    """Shifted half-open intervals on a uniform torus grid.

    ``delta`` must be ``1/b`` for an integer ``b``. The level-``k`` intervals
    start at ``o_k + j * delta**k`` with ``o_k = (-1)**k * t * delta**k`` and
    ``t = offset[0] / offset[1]``; ``t * (b + 1)`` must be an integer so the
    levels nest. Levels ``k <= 0`` are the whole circle. A cube's centre is
    the first grid point of its interval.
    """
    if not cloud.is_uniform_torus_grid():
        raise ValueError("canonical systems need a uniform 1-D torus grid")
    b = round(1 / delta)
    if b < 2 or abs(b * delta - 1) > 1e-12:
        raise ValueError("delta must be 1/b for an integer b >= 2")
    num, den = offset
    if (num * (b + 1)) % den:
        raise ValueError("offset * (1/delta + 1) must be an integer for nesting")
    a = num * (b + 1) // den  # offset t = a / (b + 1)
    n = cloud.n
    top = 0
    while n % b ** (top + 1) == 0:
        top += 1
    k_max = top if k_max is None else k_max
    if k_max > top:
        raise ValueError(f"grid of {n} points resolves levels only up to {top}")

    unit = b + 1  # positions measured in 1 / (n (b + 1))
    pos = np.arange(n, dtype=np.int64) * unit
    labels, centers, parents = [], [], []
    for k in range(k_min, k_max + 1):
        kk = max(k, 0)
        length = n * unit // b**kk
        shift = (-1) ** kk * a * n // b**kk
        count = b**kk
        lab = ((pos - shift) // length) % count
        starts = (shift + np.arange(count, dtype=np.int64) * length) % (n * unit)
        cen = (-(-starts // unit)) % n  # first grid point at or after each start
        labels.append(lab.astype(np.int64))
        centers.append(cen.astype(np.int64))
        if k == k_min:
            parents.append(np.full(count, -1, dtype=np.int64))
        else:
            parents.append(labels[-2][cen])
    return DyadicSystem(cloud, float(delta), k_min, labels, centers, parents,
                        {"base": b, "offset": [num, den], "n": n})


def ancestor(system: DyadicSystem, Q: Cube, p: int) -> Cube:
    """The cube ``p`` levels above ``Q`` that contains it."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    if Q.level - p < system.k_min:
        raise IndexError(f"ancestor level {Q.level - p} below k_min={system.k_min}")
    index = Q.index
    for k in range(Q.level, Q.level - p, -1):
        index = int(system.parents_at(k)[index])
    return system.cube(Q.level - p, index)


# --- verification -------------------------------------------------------------

@dataclass
class AxiomReport:
    partition: bool
    nested: bool
    descendants: bool
    centers: bool
    parent_links: bool

    @property
    def ok(self) -> bool:
        return all((self.partition, self.nested, self.descendants, self.centers,
                    self.parent_links))


def verify_axioms(system: DyadicSystem) -> AxiomReport:
    """Check partition, nestedness, descendant union and centre membership.

    Everything is recomputed from member sets, not from the label arrays
    used to build them.
    """
    n = system.cloud.n
    partition = True
    for k in system.level_range:
        seen = np.zeros(n, dtype=np.int64)
        for a in range(system.n_cubes(k)):
            m = system.members(k, a)
            if m.size == 0:
                partition = False
            np.add.at(seen, m, 1)
        partition &= bool(np.all(seen == 1))

    # owner[k][x]: the level-k cube holding x, rebuilt from member lists
    owner = {}
    for k in system.level_range:
        own = np.full(n, -1, dtype=np.int64)
        for a in range(system.n_cubes(k)):
            own[system.members(k, a)] = a
        owner[k] = own

    nested = descendants = True
    for j in system.level_range:
        for k in range(j + 1, system.k_max + 1):
            for a in range(system.n_cubes(k)):
                host = owner[j][system.members(k, a)]
                # every finer cube lies inside exactly one coarser cube
                nested &= bool(np.all(host == host[0]))
            sizes = np.zeros(system.n_cubes(j), dtype=np.int64)
            for a in range(system.n_cubes(k)):
                m = system.members(k, a)
                sizes[owner[j][m[0]]] += m.size
            descendants &= all(sizes[b] == system.members(j, b).size
                               for b in range(system.n_cubes(j)))

    centers = parent_links = True
    for k in system.level_range:
        cen = system.centers_at(k)
        centers &= bool(np.all(owner[k][cen] == np.arange(len(cen))))
        if k > system.k_min:
            firsts = np.array([system.members(k, a)[0] for a in range(len(cen))])
            parent_links &= bool(np.array_equal(owner[k - 1][firsts], system.parents_at(k)))
        if k < system.k_max:
            # a persisting centre heads its own chain
            finer = {int(z): b for b, z in enumerate(system.centers_at(k + 1))}
            centers &= all(int(z) in finer and owner[k + 1][z] == finer[int(z)] for z in cen)
    return AxiomReport(partition, nested, descendants, centers, parent_links)


@dataclass
class SandwichReport:
    min_inner_ratio: float
    max_outer_ratio: float
    inner_bound: float = 0.2
    outer_bound: float = 3.0

    @property
    def ok(self) -> bool:
        return self.min_inner_ratio >= self.inner_bound and self.max_outer_ratio <= self.outer_bound


def verify_sandwich(system: DyadicSystem) -> SandwichReport:
    """Worst inner/outer ball ratios ``r / delta**k`` over all cubes."""
    cloud = system.cloud
    inner, outer = np.inf, 0.0
    for k in system.level_range:
        cen = system.centers_at(k)
        lab = system.labels_at(k)
        scale = system.delta**k
        for start in range(0, len(cen), 256):
            idx = np.arange(start, min(start + 256, len(cen)))
            d = cloud.pairwise(cen[idx])
            own = lab[None, :] == idx[:, None]
            r_in = np.where(own, np.inf, d).min(axis=1)
            r_out = np.where(own, d, 0.0).max(axis=1)
            inner = min(inner, float(r_in.min()) / scale)
            outer = max(outer, float(r_out.max()) / scale)
    return SandwichReport(inner, outer)
