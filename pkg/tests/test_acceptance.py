"""One test per acceptance criterion, each printing a pass/fail line."""
import itertools
import json
import time

import numpy as np
import pytest

from dyadic_shift import cli
from dyadic_shift.adjacent_systems import build_adjacent_family, find_host
from dyadic_shift.dyadic_cubes import build_dyadic_system, canonical_torus_system, verify_axioms, verify_sandwich
from dyadic_shift.haar_analysis import (NormedSpaceE, build_haar_system, conditional_expectation,
                                        expand, haar_envelope_check, reconstruct)
from dyadic_shift.metric_core import Measure, build_nested_nets, default_levels, random_cloud, torus_grid
from dyadic_shift.shift_operator import ExperimentConfig, canonical_tau_1d, lemma42_ratio, norm_growth_experiment
from dyadic_shift.sparse_decomposition import build_sparse_decomposition, compute_T, verify_decomposition
from dyadic_shift.stochastic_norms import SignEnsemble, kahane_check, stein_check

EXACT = SignEnsemble("exact")
DELTAS = (0.5, 0.25, 0.1)
EQUIVALENCE_BAND = 4.0  # fixed before the run; the observed extremes are printed


def members(system, k, a):
    return frozenset(system.members(k, a).tolist())


def set_axioms(system):
    """Partition, nestedness and descendant union from member sets alone."""
    n = system.cloud.n
    levels = {k: [members(system, k, a) for a in range(system.n_cubes(k))]
              for k in system.level_range}
    ok = True
    for k, cubes in levels.items():
        ok &= sorted(itertools.chain.from_iterable(cubes)) == list(range(n))
        if k < system.k_max:
            for P in cubes:
                kids = [Q for Q in levels[k + 1] if Q & P]
                ok &= all(Q <= P for Q in kids) and frozenset().union(*kids) == P
    return ok


def test_criterion_1_dyadic_axioms(report):
    start = time.time()
    failures, sandwich_fail, instances = [], [], 0
    worst_inner = np.inf
    for i in range(100):
        delta = DELTAS[i % 3]
        rng = np.random.default_rng([1, i])
        if i % 2 == 0:
            cloud = torus_grid(int(rng.integers(4, 11)))
        else:
            cloud = random_cloud(int(rng.integers(32, 513)), 2, seed=i)
        lo, hi = default_levels(cloud, delta)
        system = build_dyadic_system(cloud, build_nested_nets(cloud, delta, lo, hi))
        instances += 1
        if not (verify_axioms(system).ok and (system.total_cubes > 3000 or set_axioms(system))):
            failures.append(i)
        if i % 2 == 0 and delta <= 0.25:
            rep = verify_sandwich(system)
            worst_inner = min(worst_inner, rep.min_inner_ratio)
            if not rep.ok:
                sandwich_fail.append(i)
    elapsed = time.time() - start
    passed = not failures and not sandwich_fail and elapsed <= 60
    report(1, passed, f"{instances} instances, axiom failures {failures}, sandwich failures "
                      f"{sandwich_fail}, worst inner ratio {worst_inner:.3f}, {elapsed:.1f}s")
    assert passed


def test_criterion_2_adjacent_hosting(report):
    hosted = total = 0
    recheck_ok = True
    for g in range(4, 11):
        cloud = torus_grid(g)
        family = build_adjacent_family(cloud, 0.5, 3)
        rng = np.random.default_rng([2, g])
        for _ in range(200):
            x, y = rng.choice(cloud.n, 2, replace=False)
            res = find_host(family, [(int(x), cloud.d(int(x), int(y)))], p=0, slack=4)
            total += 1
            hosted += res.found
            recheck_ok &= res.found and all(res.checks.values())
    passed = hosted == total and recheck_ok
    report(2, passed, f"K=3, delta=1/2, g=4..10, slack 4: {hosted}/{total} balls hosted, "
                      f"independent recheck {'ok' if recheck_ok else 'failed'}")
    assert passed


def test_criterion_3_sparse_decomposition(report):
    cloud = torus_grid(10)
    family = build_adjacent_family(cloud, 0.25, 5, k_min=-6)
    base = family[1]
    details, passed = [], True
    for m in (1, 2, 4, 8):
        dec = build_sparse_decomposition(base, family, canonical_tau_1d(base, m))
        rep = verify_decomposition(dec)
        T = compute_T(m, 0.25)
        depth_only = all(e["reason"] == "depth" and e["level"] - 3 - T < family.k_min
                         for e in dec.excluded)
        ok = (rep["ok"] and rep["hosts_contain"] and rep["hosts_disjoint"] and rep["hosts_nested"] and depth_only
              and len(dec.parts) <= 4 * T * family.K * dec.L)
        passed &= ok
        details.append(f"m={m}: T={T} families {len(dec.parts)}<={4 * T * family.K * dec.L} "
                       f"excluded {len(dec.excluded)} (depth only: {depth_only})")
    report(3, passed, "; ".join(details))
    assert passed


def test_criterion_4_haar_suite(report):
    rng = np.random.default_rng(4)
    systems = [canonical_torus_system(torus_grid(10), 0.5)]
    c = random_cloud(256, 2, seed=4)
    lo, hi = default_levels(c, 0.5)
    systems.append(build_dyadic_system(c, build_nested_nets(c, 0.5, lo, hi)))
    gram = rt = tower = 0.0
    env_ok = True
    envs = []
    for s in systems:
        mu = Measure(rng.random(s.cloud.n) + 0.05)
        haar = build_haar_system(s, mu)
        gram = max(gram, float(np.abs(haar.gram() - np.eye(len(haar.columns))).max()))
        for _ in range(25):
            f = rng.standard_normal(s.cloud.n)
            rt = max(rt, float(np.abs(reconstruct(expand(f, haar), haar) - f).max()))
            j, k = sorted(rng.choice(list(s.level_range), 2))
            both = conditional_expectation(conditional_expectation(f, s.labels_at(k), mu), s.labels_at(j), mu)
            tower = max(tower, float(np.abs(both - conditional_expectation(f, s.labels_at(j), mu)).max()))
        env = haar_envelope_check(haar, theta=None)
        env_ok &= env.ok
        envs.append(f"[{env.min_lower:.3f}, {env.max_upper:.3f}]")
    passed = gram <= 1e-10 and rt <= 1e-10 and tower <= 1e-12 and env_ok
    report(4, passed, f"gram {gram:.1e}, round trip {rt:.1e} (50 functions), tower {tower:.1e}, "
                      f"envelopes {' '.join(envs)} within budget 8")
    assert passed


def test_criterion_5_stochastic_suite(report):
    rng = np.random.default_rng(5)
    kahane_fail = 0
    for i in range(1000):
        q = (1.0, 2.0, 4.0)[i % 3]
        d = int(rng.integers(1, 5))
        N = int(rng.integers(1, 11))
        p = (1.5, 2.0, 3.0)[(i // 3) % 3]
        r = kahane_check(rng.standard_normal((N, d)), rng.uniform(-2, 2, N), p, EXACT, NormedSpaceE(d, q))
        kahane_fail += not r.passed
    system = canonical_torus_system(torus_grid(6), 0.5)
    mu = Measure(rng.random(64) + 0.1)
    measurable, single = [], []
    for _ in range(50):
        levels = sorted(rng.integers(0, 7, 4))
        fs = [conditional_expectation(rng.standard_normal(64), system.labels_at(k), mu) for k in levels]
        measurable.append(stein_check(fs, system, levels, 3.0, EXACT, mu))
        single.append(stein_check([rng.standard_normal(64)], system, [int(rng.integers(0, 7))], 3.0, EXACT, mu))
    stein_ok = all(r == 1.0 for r in measurable) and max(single) <= 1 + 1e-12
    passed = kahane_fail == 0 and stein_ok
    report(5, passed, f"kahane failures {kahane_fail}/1000; stein measurable ratios all 1: "
                      f"{all(r == 1.0 for r in measurable)}, single-summand max {max(single):.6f}")
    assert passed


def test_criterion_6_norm_growth(report):
    start = time.time()
    cfg = ExperimentConfig(g=12, delta=0.5, p_list=[1.5, 2.0, 4.0],
                           m_list=[2**i for i in range(11)], trials=1000, seed=0, fit_m_max=32)
    res = norm_growth_experiment(cfg)
    elapsed = time.time() - start
    p2 = max(abs(r["ratio"] - 1) for r in res.rows if r["p"] == 2.0)
    stab = {p: res.fits[p]["stability"] for p in (1.5, 4.0)}
    passed = p2 <= 1e-10 and all(s <= 1.5 for s in stab.values()) and elapsed <= 600
    fits = ", ".join(f"p={p}: C={res.fits[p]['C']:.4f} stability {stab[p]:.4f} "
                     f"spearman {res.fits[p]['spearman']:.2f}" for p in stab)
    report(6, passed, f"|R(m,2)-1| <= {p2:.1e}; {fits}; {elapsed:.1f}s")
    assert passed


def test_criterion_7_norm_equivalence_band(report):
    system = canonical_torus_system(torus_grid(8), 0.5)
    haar = build_haar_system(system, Measure.uniform(256))
    spaces = {"scalar": NormedSpaceE(), "l2^3": NormedSpaceE(3, 2.0),
              "l4^2": NormedSpaceE(2, 4.0), "l1^2": NormedSpaceE(2, 1.0)}
    lo, hi, p2_dev = np.inf, 0.0, 0.0
    for p, (name, E) in itertools.product((1.5, 2.0, 4.0), spaces.items()):
        for i in range(100):
            rng = np.random.default_rng([7, i, int(10 * p), E.d, int(E.q)])
            if i % 2:
                keys = [haar.cubes[j] for j in rng.choice(len(haar.cubes), int(rng.integers(1, 13)), replace=False)]
            else:
                x = int(rng.integers(256))
                keys = [(k, int(system.labels_at(k)[x])) for k in range(int(rng.integers(2, 9)))]
            coeffs = {k: (rng.standard_normal(E.d) if E.d > 1 else float(rng.standard_normal())) for k in keys}
            r = lemma42_ratio(coeffs, haar, p, EXACT, E)
            lo, hi = min(lo, r), max(hi, r)
            if p == 2.0 and name == "scalar":
                p2_dev = max(p2_dev, abs(r - 1))
    c = EQUIVALENCE_BAND
    passed = 1 / c <= lo and hi <= c and p2_dev <= 1e-10
    report(7, passed, f"band c={c}: observed ratios in [{lo:.4f}, {hi:.4f}] over 1200 instances; "
                      f"p=2 scalar |ratio-1| <= {p2_dev:.1e}")
    assert passed


def test_criterion_8_determinism(report, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"input": {"generator": "torus_grid", "g": 8}}))
    outs = [tmp_path / "first", tmp_path / "second"]
    codes = [cli.main(["verify-all", "--config", str(config), "--seed", "11", "--out", str(o)])
             for o in outs]
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in csvs)
    passed = codes == [0, 0] and same and len(csvs) >= 2
    report(8, passed, f"exit codes {codes}; {len(csvs)} CSVs byte-identical: {same}")
    assert passed
