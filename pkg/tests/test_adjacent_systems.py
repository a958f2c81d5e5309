import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadic_shift.adjacent_systems import (AdjacentFamily, build_adjacent_family,
                                           canonical_offsets, find_host, host_pair_for_cubes)
from dyadic_shift.dyadic_cubes import build_dyadic_system, verify_axioms
from dyadic_shift.metric_core import (build_nested_nets, default_levels, random_cloud,
                                      torus_grid)


def oracle_host_omegas(family, balls, p, slack):
    """Every omega with some cube per ball meeting the three host conditions, by member sets."""
    cloud, delta = family.cloud, family.delta
    good = []
    for omega in range(1, family.K + 1):
        s = family[omega]
        ok_all = True
        for c, r in balls:
            ball = set(cloud.ball(c, r).tolist())
            wide = set(cloud.ball(c, r / delta**p).tolist())
            ok = False
            for k in s.level_range:
                if k - p < s.k_min or delta**k > slack * r / delta**2 * (1 + 1e-12):
                    continue
                for a in range(s.n_cubes(k)):
                    Q = s.cube(k, a)
                    up = Q
                    for _ in range(p):
                        up = s.cube(up.level - 1, up.parent)
                    if ball <= set(Q.members.tolist()) and wide <= set(up.members.tolist()):
                        ok = True
                        break
                if ok:
                    break
            ok_all &= ok
        if ok_all:
            good.append(omega)
    return good


class TestFamily:
    def test_single_system(self):
        fam = build_adjacent_family(torus_grid(4), 0.5, 1)
        assert fam.K == 1 and verify_axioms(fam[1]).ok

    def test_thirds(self):
        assert canonical_offsets(0.5, 3) == [(0, 3), (1, 3), (2, 3)]
        fam = build_adjacent_family(torus_grid(4), 0.5, 3)
        assert all(verify_axioms(s).ok for s in fam.systems)
        assert [fam[w].canonical["offset"] for w in (1, 2, 3)] == [[0, 3], [1, 3], [2, 3]]

    def test_too_many_offsets(self):
        with pytest.raises(ValueError):
            canonical_offsets(0.5, 4)

    def test_random_mode_deterministic(self):
        c = random_cloud(80, 2, seed=4)
        a = build_adjacent_family(c, 0.5, 4, "random", seed=9)
        b = build_adjacent_family(c, 0.5, 4, "random", seed=9)
        assert all(verify_axioms(s).ok for s in a.systems)
        for s, t in zip(a.systems, b.systems):
            assert all(np.array_equal(s.labels_at(k), t.labels_at(k)) for k in s.level_range)

    def test_canonical_needs_grid(self):
        with pytest.raises(ValueError):
            build_adjacent_family(random_cloud(10, 1, seed=0), 0.5, 2)

    def test_out_of_range_omega(self):
        fam = build_adjacent_family(torus_grid(4), 0.5, 2)
        with pytest.raises(IndexError):
            fam[3]


class TestFindHost:
    @pytest.fixture
    def greedy_family(self):
        c = torus_grid(8)
        lo, hi = default_levels(c, 0.25)
        s = build_dyadic_system(c, build_nested_nets(c, 0.25, lo, hi))
        return AdjacentFamily(0.25, [s], [{"omega": 1}])

    def test_inner_ball(self, greedy_family):
        s = greedy_family[1]
        Q = s.cube(2, 3)
        res = find_host(greedy_family, [(Q.center, 0.25**2 / 5)], p=0, slack=1)
        assert res.omega == 1 and all(res.checks.values())
        assert set(greedy_family.cloud.ball(Q.center, 0.25**2 / 5).tolist()) <= set(Q.members.tolist())

    def test_two_balls_same_system(self, greedy_family):
        s = greedy_family[1]
        balls = [(s.cube(2, a).center, 0.25**2 / 5) for a in (0, 7)]
        res = find_host(greedy_family, balls, slack=1)
        assert res.omega == 1 and res.cubes[0].key != res.cubes[1].key

    def test_straddling_ball_moves_to_shifted_grid(self):
        fam = build_adjacent_family(torus_grid(6), 0.5, 3)
        balls = [(32, 2 / 64)]
        res = find_host(fam, balls, p=0, slack=1)
        assert res.omega in (2, 3)
        assert res.omega == oracle_host_omegas(fam, balls, 0, 1)[0]
        assert 1 in res.diagnostics

    def test_not_found_is_a_value(self):
        fam = build_adjacent_family(torus_grid(6), 0.5, 1)
        res = find_host(fam, [(32, 2 / 64)], p=0, slack=1)
        assert not res and res.diagnostics

    def test_radius_below_scale(self):
        fam = build_adjacent_family(torus_grid(4), 0.5, 3)
        with pytest.raises(ValueError):
            find_host(fam, [(0, 1e-4)])

    @given(st.integers(0, 63), st.integers(1, 31), st.integers(0, 2), st.floats(1.0, 4.0))
    def test_matches_oracle_and_rechecks(self, x, steps, p, slack):
        fam = build_adjacent_family(torus_grid(6), 0.5, 3, k_min=-3)
        balls = [(x, steps / 64)]
        res = find_host(fam, balls, p=p, slack=slack)
        good = oracle_host_omegas(fam, balls, p, slack)
        assert res.omega == (good[0] if good else None)
        if res:
            assert all(res.checks.values())

    @given(st.integers(0, 63), st.integers(1, 31), st.floats(1.0, 2.0), st.floats(0.0, 2.0))
    def test_monotone_in_slack(self, x, steps, s, extra):
        fam = build_adjacent_family(torus_grid(6), 0.5, 3)
        if find_host(fam, [(x, steps / 64)], slack=s):
            assert find_host(fam, [(x, steps / 64)], slack=s + extra)


class TestHostPair:
    def test_degenerate_pair(self):
        c = torus_grid(8)
        fam = build_adjacent_family(c, 0.25, 5, k_min=-2)
        Q = fam[1].cube(4, 37)
        res = host_pair_for_cubes(fam, fam[1], Q, Q, 1)
        P1, P2 = res.cubes
        assert P1.key == P2.key
        star = set(res.ancestors[0].members.tolist())
        assert set(c.ball(Q.center, 2 * fam[1].ball_radius(4)).tolist()) <= star

    def test_siblings_clamped_to_top(self):
        fam = build_adjacent_family(torus_grid(4), 0.5, 3)
        base = fam[1]
        Q = base.cube(3, 2)
        sib = base.children(base.cube(2, Q.parent))
        res = host_pair_for_cubes(fam, base, sib[0], sib[1], 1, clamp=True)
        assert res and all(P.level == 0 for P in res.cubes)

    def test_range_error(self):
        fam = build_adjacent_family(torus_grid(4), 0.5, 3)
        Q = fam[1].cube(3, 0)
        with pytest.raises(IndexError):
            host_pair_for_cubes(fam, fam[1], Q, Q, 1000)
