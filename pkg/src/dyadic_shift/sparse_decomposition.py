"""Splitting a dyadic system into sparse families with host cubes.

Every cube ``Q`` of a base system gets a label ``(i, j, omega)``: ``i`` from
a level-wise separation splitting, ``omega`` the first adjacent system that
hosts both ``Q`` and ``tau(Q)`` three levels up, ``j = lev(Q) mod 4T``. Each
labelled cube carries a host triple ``(P_Q, P_tauQ, P*_Q)`` with
``P*_Q`` the ``T``-th ancestor of ``P_Q``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .adjacent_systems import AdjacentFamily, _host_for_ball
from .dyadic_cubes import Cube, DyadicSystem, ancestor
from .metric_core import Measure, split_separated


def compute_T(m: float, delta: float) -> int:
    """Least integer ``T >= 1`` with ``2 m delta**T <= 1``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if m < 1:
        raise ValueError("m must be at least 1")
    T = 1
    while 2 * m * delta**T > 1:
        T += 1
    return T


@dataclass(eq=False)
class TauMap:
    """Level-preserving injective cube map; ``targets[k - k_min][a]`` is the image index."""

    system: DyadicSystem
    m: float
    targets: list[np.ndarray]
    c_tau: float = 1.0
    notes: list[str] = field(default_factory=list)

    def index(self, k: int, a: int) -> int:
        return int(self.targets[k - self.system.k_min][a])

    def __call__(self, Q: Cube) -> Cube:
        return self.system.cube(Q.level, self.index(Q.level, Q.index))

    @classmethod
    def identity(cls, system: DyadicSystem, m: float = 1.0) -> "TauMap":
        return cls(system, m, [np.arange(system.n_cubes(k)) for k in system.level_range])

    def is_permutation(self) -> bool:
        return all(np.array_equal(np.sort(t), np.arange(len(t))) for t in self.targets)

    def inverse(self) -> "TauMap":
        if not self.is_permutation():
            raise ValueError("only level-wise permutations can be inverted")
        inv = [np.argsort(t) for t in self.targets]
        return TauMap(self.system, self.m, inv, self.c_tau)

    def verify(self, mu: Measure | None = None) -> dict:
        """Independent re-check of injectivity, level preservation, containment and measure."""
        system, cloud = self.system, self.system.cloud
        injective = level = contain = True
        worst_ratio = 1.0
        for k in system.level_range:
            t = np.asarray(self.targets[k - system.k_min])
            level &= len(t) == system.n_cubes(k) and bool(np.all((0 <= t) & (t < len(t))))
            injective &= len(set(t.tolist())) == len(t)
            radius = self.m * system.ball_radius(k)
            for a in range(len(t)):
                Q = system.cube(k, a)
                image = system.members(k, int(t[a]))
                contain &= bool(np.all(cloud.dist_from(Q.center, image) < radius))
                if mu is not None:
                    r = mu.of(image) / mu.of(Q.members)
                    worst_ratio = max(worst_ratio, r, 1 / r)
        out = {"injective": injective, "level_preserving": level, "containment": contain,
               "measure_ratio": worst_ratio}
        out["ok"] = injective and level and contain and worst_ratio <= self.c_tau * (1 + 1e-12)
        return out


# --- level-wise splitting -------------------------------------------------------

def _greedy_split(groups: list[list[int]], conflict: np.ndarray) -> list[list[int]]:
    """Refine each group into conflict-free parts by repeated maximal extraction."""
    out = []
    for group in groups:
        remaining = list(group)
        while remaining:
            taken, rest = [], []
            for a in remaining:
                if any(conflict[a, b] for b in taken):
                    rest.append(a)
                else:
                    taken.append(a)
            out.append(taken)
            remaining = rest
    return out


def dilated_radius(system: DyadicSystem, k: int) -> float:
    """Radius of ``3 delta**-3 B_Q`` for a level-``k`` cube."""
    return 3.0 * system.ball_radius(k) / system.delta**3


def partition_lemma32(system: DyadicSystem, tau: TauMap,
                      separation: float = 18.0) -> dict[tuple[int, int], int]:
    """Part index ``i`` for every cube ``(level, index)``.

    Per level the centres are split into ``separation * delta**(k-3)``
    separated sets, then refined so that the ``3 delta**-3`` dilations of
    ``B_Q``/``B_tauP`` and of ``B_tauQ``/``B_tauP`` are disjoint for distinct
    cubes of a part.
    """
    cloud = system.cloud
    part_of: dict[tuple[int, int], int] = {}
    for k in system.level_range:
        n_k = system.n_cubes(k)
        cen = system.centers_at(k)
        img = np.array([system.centers_at(k)[tau.index(k, a)] for a in range(n_k)])
        reach = 2 * dilated_radius(system, k)
        if n_k == 1:
            part_of[(k, 0)] = 0
            continue
        d_cc = cloud.pairwise(cen, cen)
        np.fill_diagonal(d_cc, np.inf)
        d1 = min(float(d_cc.min()), separation * system.delta ** (k - 3))
        by_center = {int(z): a for a, z in enumerate(cen)}
        step1 = [[by_center[z] for z in part.members]
                 for part in split_separated(cloud, cen.tolist(), d1,
                                             separation * system.delta ** (k - 3))]
        d_ci = cloud.pairwise(cen, img)
        cross = (d_ci < reach) | (d_ci.T < reach)
        step2 = _greedy_split(step1, cross)
        d_ii = cloud.pairwise(img, img)
        step3 = _greedy_split(step2, d_ii < reach)
        for i, part in enumerate(step3):
            for a in part:
                part_of[(k, a)] = i
    return part_of


# --- decomposition --------------------------------------------------------------

@dataclass
class HostTriple:
    cube: Cube
    P: Cube
    Ptau: Cube
    Pstar: Cube


@dataclass
class SparseFamily:
    label: tuple[int, int, int]
    entries: list[HostTriple] = field(default_factory=list)

    @property
    def cubes(self) -> list[Cube]:
        return [e.cube for e in self.entries]

    def to_json(self) -> dict:
        i, j, omega = self.label
        return {"lambda": {"i": i, "j": j, "omega": omega},
                "cubes": [{"cube": [e.cube.level, e.cube.index],
                           "P": [e.P.level, e.P.index],
                           "Ptau": [e.Ptau.level, e.Ptau.index],
                           "Pstar": [e.Pstar.level, e.Pstar.index]} for e in self.entries]}


@dataclass
class Decomposition:
    system: DyadicSystem
    family: AdjacentFamily
    tau: TauMap
    T: int
    L: int
    parts: list[SparseFamily]
    excluded: list[dict]

    @property
    def bound(self) -> int:
        """``4 T K L``."""
        return 4 * self.T * self.family.K * self.L

    def excluded_mass(self, mu: Measure) -> float:
        return sum(mu.of(self.system.members(e["level"], e["index"])) for e in self.excluded)

    def to_json(self) -> dict:
        return {"T": self.T, "L": self.L, "K": self.family.K, "bound": self.bound,
                "families": [f.to_json() for f in self.parts], "excluded": self.excluded}


def host_cubes(R: Cube, system: DyadicSystem, family: AdjacentFamily, tau: TauMap, T: int,
               omega: int):
    """Host triple for ``R`` in system ``omega`` or ``None``."""
    s = family[omega]
    k = R.level
    lev = k - 3
    if lev - T < s.k_min:
        return None
    r = system.ball_radius(k)
    image = tau(R)
    P, Pstar, _ = _host_for_ball(s, R.center, r, T, math.inf, lev, extra=R.members)
    if P is None:
        return None
    Ptau, _, _ = _host_for_ball(s, image.center, r, 0, math.inf, lev, extra=image.members)
    if Ptau is None:
        return None
    return HostTriple(R, P, Ptau, Pstar)


def gamma(R: Cube, system: DyadicSystem, family: AdjacentFamily, tau: TauMap,
          T: int) -> int | None:
    """First ``omega`` hosting ``B_R`` and ``B_tauR`` three levels up with
    ``delta**-T B_R`` inside the ``T``-th ancestor; ``None`` if none does."""
    for omega in range(1, family.K + 1):
        if host_cubes(R, system, family, tau, T, omega) is not None:
            return omega
    return None


def build_sparse_decomposition(system: DyadicSystem, family: AdjacentFamily,
                               tau: TauMap, separation: float = 18.0) -> Decomposition:
    T = compute_T(tau.m, system.delta)
    part_of = partition_lemma32(system, tau, separation)
    L = 1 + max(part_of.values())
    groups: dict[tuple[int, int, int], list[HostTriple]] = defaultdict(list)
    excluded = []
    for Q in system.cubes():
        if Q.level - 3 - T < family.k_min:
            excluded.append({"level": Q.level, "index": Q.index, "reason": "depth"})
            continue
        triple = None
        for omega in range(1, family.K + 1):
            triple = host_cubes(Q, system, family, tau, T, omega)
            if triple is not None:
                break
        if triple is None:
            excluded.append({"level": Q.level, "index": Q.index, "reason": "hosting"})
            continue
        label = (part_of[Q.key], Q.level % (4 * T), omega)
        groups[label].append(triple)
    parts = [SparseFamily(lab, sorted(groups[lab], key=lambda e: e.cube.key))
             for lab in sorted(groups)]
    return Decomposition(system, family, tau, T, L, parts, excluded)


def verify_decomposition(dec: Decomposition, m: float | None = None) -> dict:
    """Check host containment, disjointness and nesting, disjoint labelling, level gaps
    and the part-count bound.

    All relations are evaluated on member sets.
    """
    system, cloud = dec.system, dec.system.cloud
    m = dec.tau.m if m is None else m
    T = dec.T
    members = lambda C: set(C.members.tolist())

    seen: dict[tuple[int, int], int] = {}
    disjoint_union = True
    for f in dec.parts:
        for e in f.entries:
            disjoint_union &= e.cube.key not in seen
            seen[e.cube.key] = 1

    contain = disjoint = nested = gaps = True
    for f in dec.parts:
        omega = f.label[2]
        s = dec.family[omega]
        by_level: dict[int, list[HostTriple]] = defaultdict(list)
        for e in f.entries:
            Q = e.cube
            star = members(e.Pstar)
            contain &= members(Q) <= members(e.P)
            contain &= members(dec.tau(Q)) <= members(e.Ptau)
            contain &= members(e.P) | members(e.Ptau) <= star
            contain &= set(cloud.ball(Q.center, 2 * m * system.ball_radius(Q.level)).tolist()) <= star
            contain &= e.Pstar.key == ancestor(s, e.P, T).key
            by_level[Q.level].append(e)
        for entries in by_level.values():
            unions = [members(e.P) | members(e.Ptau) for e in entries]
            for a in range(len(unions)):
                for b in range(a + 1, len(unions)):
                    if unions[a] & unions[b]:
                        disjoint = False
        occupied = sorted(by_level)
        gaps &= all((b - a) % (4 * T) == 0 for a, b in zip(occupied, occupied[1:]))
        keyed = {e.cube.key: e for e in f.entries}
        for e in f.entries:
            inner = members(e.cube)
            up = e.cube
            while up.parent is not None:
                up = system.cube(up.level - 1, up.parent)
                outer = keyed.get(up.key)
                if outer is not None and inner < members(up):
                    nested &= members(e.Pstar) <= members(outer.P)
    count_ok = len(dec.parts) <= dec.bound
    ok = disjoint_union and contain and disjoint and nested and gaps and count_ok
    return {"disjoint_union": disjoint_union, "hosts_contain": contain,
            "hosts_disjoint": disjoint, "hosts_nested": nested,
            "level_gaps": gaps, "count": len(dec.parts), "bound": dec.bound,
            "count_ok": count_ok, "excluded": len(dec.excluded), "ok": ok}
