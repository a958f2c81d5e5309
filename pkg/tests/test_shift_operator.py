import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadic_shift.dyadic_cubes import build_dyadic_system, canonical_torus_system
from dyadic_shift.haar_analysis import build_haar_system
from dyadic_shift.metric_core import Measure, build_nested_nets, default_levels, random_cloud, torus_grid
from dyadic_shift.shift_operator import (ExperimentConfig, ShiftOperator, apply_shift,
                                         canonical_tau_1d, lemma42_ratio,
                                         norm_growth_experiment, random_tau, synthesize)
from dyadic_shift.sparse_decomposition import TauMap
from dyadic_shift.stochastic_norms import SignEnsemble, bochner_norm


@pytest.fixture(scope="module")
def grid64():
    s = canonical_torus_system(torus_grid(6), 0.5)
    return build_haar_system(s, Measure.uniform(64))


class TestCanonicalTau:
    def test_full_wrap_is_identity(self):
        s = canonical_torus_system(torus_grid(6), 0.5)
        tau = canonical_tau_1d(s, 8)
        assert np.array_equal(tau.targets[3 - s.k_min], np.arange(8))

    def test_unit_shift_cycle(self, torus16):
        s = canonical_torus_system(torus16, 0.5)
        tau = canonical_tau_1d(s, 1)
        assert [tau.index(2, a) for a in range(4)] == [1, 2, 3, 0]
        for a in range(4):
            Q = s.cube(2, a)
            image = s.members(2, tau.index(2, a))
            assert all(torus16.d(Q.center, int(x)) < 1 * s.ball_radius(2) for x in image)

    def test_rejects_zero_and_noncanonical(self, line16):
        s = canonical_torus_system(torus_grid(4), 0.5)
        with pytest.raises(ValueError):
            canonical_tau_1d(s, 0)
        other = build_dyadic_system(line16, build_nested_nets(line16, 0.5, 0, 4))
        with pytest.raises(ValueError):
            canonical_tau_1d(other, 1)

    @pytest.mark.parametrize("m", [1, 2, 5, 64])
    def test_admissible(self, m):
        s = canonical_torus_system(torus_grid(6), 0.5)
        assert canonical_tau_1d(s, m).verify(Measure.uniform(64))["ok"]


class TestRandomTau:
    @pytest.fixture
    def cloud_system(self):
        c = random_cloud(100, 2, seed=3)
        lo, hi = default_levels(c, 0.5)
        return build_dyadic_system(c, build_nested_nets(c, 0.5, lo, hi))

    def test_large_m_permutes(self):
        s = canonical_torus_system(torus_grid(5), 0.5)
        tau = random_tau(s, 100, seed=1)
        assert tau.is_permutation() and not tau.notes
        assert any(not np.array_equal(t, np.arange(len(t))) for t in tau.targets)
        assert tau.verify(Measure.uniform(32))["ok"]

    def test_small_m_is_admissible(self, cloud_system):
        tau = random_tau(cloud_system, 1, seed=0)
        rep = tau.verify(Measure.uniform(100))
        assert rep["injective"] and rep["level_preserving"] and rep["containment"]
        fixed = sum(int(np.sum(t == np.arange(len(t)))) for t in tau.targets)
        assert fixed >= cloud_system.total_cubes // 2

    def test_seeded(self, cloud_system):
        a, b = random_tau(cloud_system, 3, seed=7), random_tau(cloud_system, 3, seed=7)
        assert all(np.array_equal(x, y) for x, y in zip(a.targets, b.targets))


class TestApplyShift:
    def test_single(self, grid64):
        T = ShiftOperator(canonical_tau_1d(grid64.system, 3), grid64)
        assert apply_shift(T, {(4, 2): 1.5}) == {(4, 5): 1.5}

    def test_identity(self, grid64):
        T = ShiftOperator(TauMap.identity(grid64.system), grid64)
        c = {(2, 1): 1.0, (5, 30): -2.0}
        assert apply_shift(T, c) == c

    def test_outside_domain(self, grid64):
        T = ShiftOperator(TauMap.identity(grid64.system), grid64)
        with pytest.raises(KeyError):
            apply_shift(T, {(6, 0): 1.0})

    @given(st.integers(0, 10_000), st.integers(1, 70))
    def test_inverse_and_parseval(self, seed, m):
        haar = build_haar_system(canonical_torus_system(torus_grid(6), 0.5), Measure.uniform(64))
        tau = canonical_tau_1d(haar.system, m)
        T, Tinv = ShiftOperator(tau, haar), ShiftOperator(tau.inverse(), haar)
        rng = np.random.default_rng(seed)
        keys = [haar.cubes[i] for i in rng.choice(len(haar.cubes), 6, replace=False)]
        c = {k: float(rng.standard_normal()) for k in keys}
        assert apply_shift(Tinv, apply_shift(T, c)) == c
        mu = haar.mu
        before = bochner_norm(synthesize(c, haar), 2, mu)
        after = bochner_norm(synthesize(apply_shift(T, c), haar), 2, mu)
        assert after == pytest.approx(before, rel=1e-12)


class TestNormEquivalenceRatio:
    def test_single_cube(self, grid64):
        assert lemma42_ratio({(3, 1): 1.0}, grid64, 2) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self, grid64):
        assert lemma42_ratio({}, grid64, 3) == 1.0

    @given(st.integers(0, 10_000))
    def test_p2_band(self, seed):
        haar = build_haar_system(canonical_torus_system(torus_grid(6), 0.5),
                                 Measure(np.random.default_rng(seed).random(64) + 0.1))
        rng = np.random.default_rng(seed)
        keys = [haar.cubes[i] for i in rng.choice(len(haar.cubes), 8, replace=False)]
        r = lemma42_ratio({k: float(rng.standard_normal()) for k in keys}, haar, 2)
        assert abs(r - 1) <= 1e-10


@pytest.fixture(scope="module")
def result():
    cfg = ExperimentConfig(g=8, p_list=[1.5, 2.0, 4.0], m_list=[1, 2, 4, 8, 16], trials=120, seed=3)
    return norm_growth_experiment(cfg)


class TestExperiment:
    def test_p2_isometry(self, result):
        assert all(abs(r["ratio"] - 1) <= 1e-10 for r in result.rows if r["p"] == 2.0)

    def test_unit_shift_at_least_one(self, result):
        assert all(1 - 1e-12 <= r["ratio"] < math.inf for r in result.rows if r["m"] == 1)

    def test_fit_covers_every_row(self, result):
        for r in result.rows:
            assert r["ratio"] <= r["fitC"] * r["bound"] * (1 + 1e-12)

    def test_csv(self, result):
        lines = result.csv_text().splitlines()
        assert lines[0] == "m,p,q_E,d,ratio,bound,fitC"
        assert len(lines) == 1 + 15

    def test_monotone_in_samples(self):
        small = norm_growth_experiment(ExperimentConfig(g=6, m_list=[1, 3], trials=30, seed=1))
        big = norm_growth_experiment(ExperimentConfig(g=6, m_list=[1, 3], trials=90, seed=1))
        for a, b in zip(small.rows, big.rows):
            assert b["ratio"] >= a["ratio"]

    def test_threads_do_not_change_output(self):
        cfg = ExperimentConfig(g=6, m_list=[1, 2, 4, 8], trials=30)
        assert norm_growth_experiment(cfg).csv_text() == norm_growth_experiment(cfg, threads=3).csv_text()

    def test_vector_valued(self):
        cfg = ExperimentConfig(g=6, m_list=[1, 4], p_list=[2.0, 3.0], d=3, q=4.0, trials=30)
        res = norm_growth_experiment(cfg)
        assert res.fits[3.0]["alpha"] == pytest.approx(1 / 2 - 1 / 4)
        assert all(r["ratio"] > 0 for r in res.rows)

    @pytest.mark.parametrize("bad", [{"g": 13}, {"p_list": [1.0]}, {"m_list": [0]}, {"trials": 0}])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
