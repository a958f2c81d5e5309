"""Families of adjacent dyadic systems and host-cube search.

Two construction modes:

* ``canonical1d`` -- shifted interval systems on a uniform torus grid with
  offsets ``t = j / (b + 1)`` (the one-third trick for ``delta = 1/2``).
* ``random`` -- greedy nets built in seeded random orders.

Existence of a good system for a ball is not assumed anywhere: ``find_host``
searches exhaustively and the result re-checks itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dyadic_cubes import (Cube, DyadicSystem, ancestor, build_dyadic_system,
                           canonical_torus_system)
from .metric_core import PointCloud, build_nested_nets, default_levels


@dataclass(eq=False)
class AdjacentFamily:
    delta: float
    systems: list[DyadicSystem]
    params: list[dict]
    size_constant: float = 2.0

    def __post_init__(self):
        if len(self.systems) > math.ceil(self.size_constant / self.delta):
            raise ValueError("family larger than ceil(c / delta)")

    @property
    def K(self) -> int:
        return len(self.systems)

    def __getitem__(self, omega: int) -> DyadicSystem:
        """Systems are numbered ``1..K``."""
        if not 1 <= omega <= self.K:
            raise IndexError(omega)
        return self.systems[omega - 1]

    @property
    def cloud(self) -> PointCloud:
        return self.systems[0].cloud

    @property
    def k_min(self) -> int:
        return max(s.k_min for s in self.systems)

    @property
    def k_max(self) -> int:
        return min(s.k_max for s in self.systems)

    def to_json(self) -> dict:
        return {"delta": self.delta, "K": self.K, "params": self.params,
                "systems": [s.to_json() for s in self.systems]}

    @classmethod
    def from_json(cls, data: dict, cloud: PointCloud) -> "AdjacentFamily":
        systems = [DyadicSystem.from_json(s, cloud) for s in data["systems"]]
        return cls(float(data["delta"]), systems, list(data["params"]))


def canonical_offsets(delta: float, K: int) -> list[tuple[int, int]]:
    """``K`` offsets spread over ``{0, 1/(b+1), ..., b/(b+1)}``."""
    b = round(1 / delta)
    if K > b + 1:
        raise ValueError(f"canonical1d supports at most {b + 1} systems for delta=1/{b}")
    return [((w * (b + 1)) // K, b + 1) for w in range(K)]


def build_adjacent_family(cloud: PointCloud, delta: float, K: int,
                          mode: str = "canonical1d", k_min: int | None = None,
                          k_max: int | None = None, seed: int = 0,
                          size_constant: float = 2.0) -> AdjacentFamily:
    if K < 1:
        raise ValueError("K must be at least 1")
    systems, params = [], []
    if mode == "canonical1d":
        if not cloud.is_uniform_torus_grid():
            raise ValueError("canonical1d needs a uniform 1-D torus grid")
        for omega, off in enumerate(canonical_offsets(delta, K), start=1):
            systems.append(canonical_torus_system(cloud, delta, 0 if k_min is None else k_min,
                                                  k_max, off))
            params.append({"omega": omega, "mode": mode, "offset": list(off)})
    elif mode == "random":
        lo, hi = default_levels(cloud, delta)
        lo = lo if k_min is None else k_min
        hi = hi if k_max is None else k_max
        for omega in range(1, K + 1):
            order = np.random.default_rng([seed, omega]).permutation(cloud.n)
            nets = build_nested_nets(cloud, delta, lo, hi, order)
            systems.append(build_dyadic_system(cloud, nets))
            params.append({"omega": omega, "mode": mode, "seed": [seed, omega]})
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return AdjacentFamily(float(delta), systems, params, size_constant)


@dataclass
class HostResult:
    """Outcome of a host search; ``omega is None`` means nothing qualified."""

    omega: int | None
    cubes: list[Cube] = field(default_factory=list)
    ancestors: list[Cube] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.omega is not None

    def __bool__(self):
        return self.found

    def to_json(self) -> dict:
        return {
            "omega": self.omega,
            "cubes": [{"level": q.level, "index": q.index, "center": q.center} for q in self.cubes],
            "ancestors": [{"level": q.level, "index": q.index} for q in self.ancestors],
            "checks": self.checks,
            "diagnostics": {str(k): v for k, v in self.diagnostics.items()},
        }


def _inside(system: DyadicSystem, k: int, ids: np.ndarray, index: int) -> bool:
    return bool(np.all(system.labels_at(k)[ids] == index))


def _host_for_ball(system: DyadicSystem, center: int, radius: float, p: int,
                   slack: float, level: int | None, extra=None):
    """Finest admissible host in one system, or the reason none exists."""
    cloud = system.cloud
    dist = cloud.dist_from(center)
    ball = np.flatnonzero(dist < radius)
    wide = np.flatnonzero(dist < radius / system.delta**p)
    levels = range(system.k_max, system.k_min - 1, -1) if level is None else [level]
    reason = "no level in range"
    for k in levels:
        if not system.has_level(k):
            reason = "level outside system"
            continue
        if system.delta**k > slack * radius / system.delta**2:
            reason = "size"
            continue
        if k - p < system.k_min:
            reason = "ancestor above top level"
            continue
        index = int(system.labels_at(k)[center])
        if not _inside(system, k, ball, index):
            reason = "containment"
            continue
        if extra is not None and not _inside(system, k, extra, index):
            reason = "containment"
            continue
        Q = system.cube(k, index)
        A = ancestor(system, Q, p)
        if not _inside(system, A.level, wide, A.index):
            reason = "ancestor"
            continue
        return Q, A, None
    return None, None, reason


def _check_scale(family: AdjacentFamily, radius: float, slack: float) -> None:
    if not radius > 0:
        raise ValueError("ball radius must be positive")
    finest = family.delta ** family.k_max
    if finest > slack * radius / family.delta**2:
        raise ValueError(f"radius {radius} below the finest scale of the family")


def find_host(family: AdjacentFamily, balls: Sequence[tuple[int, float]],
              p: int | Sequence[int] = 0, slack: float = 1.0,
              levels: Sequence[int | None] | None = None) -> HostResult:
    """Smallest ``omega`` whose system hosts every ball.

    For ball ``B`` the host ``Q`` must satisfy: the cloud part of ``B`` lies
    in ``Q``; ``l(Q) <= slack * r(B) / delta**2``; the cloud part of
    ``B`` dilated by ``delta**-p`` lies in the ``p``-th ancestor of ``Q``.
    Within a system the finest qualifying level is taken, unless ``levels``
    pins one per ball.
    """
    if not balls:
        raise ValueError("need at least one ball")
    if slack < 1:
        raise ValueError("slack must be at least 1")
    ps = [p] * len(balls) if isinstance(p, (int, np.integer)) else list(p)
    levels = [None] * len(balls) if levels is None else list(levels)
    for _, r in balls:
        _check_scale(family, r, slack)
    diagnostics = {}
    for omega in range(1, family.K + 1):
        system = family[omega]
        cubes, ancs, failed = [], [], None
        for i, ((c, r), pi, lev) in enumerate(zip(balls, ps, levels)):
            Q, A, reason = _host_for_ball(system, int(c), float(r), int(pi), slack, lev)
            if Q is None:
                failed = {"ball": i, "reason": reason}
                break
            cubes.append(Q)
            ancs.append(A)
        if failed is None:
            result = HostResult(omega, cubes, ancs, diagnostics=diagnostics)
            result.checks = recheck_host(family, balls, result, ps, slack)
            return result
        diagnostics[omega] = failed
    return HostResult(None, diagnostics=diagnostics)


def recheck_host(family: AdjacentFamily, balls, result: HostResult, p, slack: float) -> dict:
    """Re-derive conditions (i)-(iii) by direct set inclusion."""
    cloud = family.cloud
    ps = [p] * len(balls) if isinstance(p, (int, np.integer)) else list(p)
    system = family[result.omega]
    contain = size = anc = True
    for (c, r), pi, Q, A in zip(balls, ps, result.cubes, result.ancestors):
        members = set(Q.members.tolist())
        contain &= set(cloud.ball(int(c), r).tolist()) <= members
        size &= system.delta**Q.level <= slack * r / system.delta**2 * (1 + 1e-12)
        up = Q
        for _ in range(pi):
            up = system.cube(up.level - 1, up.parent)
        anc &= up.key == A.key
        anc &= set(cloud.ball(int(c), r / system.delta**pi).tolist()) <= set(A.members.tolist())
    return {"containment": bool(contain), "size": bool(size), "ancestor": bool(anc)}


def host_pair_for_cubes(family: AdjacentFamily, base: DyadicSystem, Q1: Cube, Q2: Cube,
                        m: float, T: int | None = None, clamp: bool = False) -> HostResult:
    """Hosts ``P1, P2`` three levels up and a common ancestor ``P* = P1^(T)``.

    Requires ``B_Q1 cap X`` (and ``Q1``) inside ``P1``, the same for ``Q2``
    and ``P2``, and ``2m B_Q1 cap X`` inside ``P*``. ``T`` defaults to the
    least ``T >= 1`` with ``2 m delta**T <= 1``. With ``clamp=True`` a level
    above the family's top is read as the top level, which is only allowed
    when that level is a single cube.
    """
    from .sparse_decomposition import compute_T

    if Q1.level != Q2.level:
        raise ValueError("cubes must share a level")
    if m < 1:
        raise ValueError("m must be at least 1")
    delta = family.delta
    T = compute_T(m, delta) if T is None else T
    k = Q1.level
    host_level, star_level = k - 3, k - 3 - T
    if star_level < family.k_min:
        if not clamp:
            raise IndexError(f"level {star_level} below the family range")
        if any(s.n_cubes(s.k_min) != 1 for s in family.systems):
            raise IndexError("cannot clamp: top level is not a single cube")
    cloud = family.cloud
    r = base.ball_radius(k)
    need1 = np.union1d(cloud.ball(Q1.center, r), Q1.members)
    need2 = np.union1d(cloud.ball(Q2.center, r), Q2.members)
    need_star = cloud.ball(Q1.center, 2 * m * r)
    diagnostics = {}
    for omega in range(1, family.K + 1):
        s = family[omega]
        lev = max(host_level, s.k_min)
        a1 = int(s.labels_at(lev)[Q1.center])
        a2 = int(s.labels_at(lev)[Q2.center])
        if not _inside(s, lev, need1, a1) or not _inside(s, lev, need2, a2):
            diagnostics[omega] = "host containment"
            continue
        P1 = s.cube(lev, a1)
        Pstar = ancestor(s, P1, min(T, lev - s.k_min))
        if not _inside(s, Pstar.level, need_star, Pstar.index):
            diagnostics[omega] = "ancestor containment"
            continue
        return HostResult(omega, [P1, s.cube(lev, a2)], [Pstar], diagnostics=diagnostics)
    return HostResult(None, diagnostics=diagnostics)
