"""Haar shift operators ``h_Q -> h_tau(Q)`` and the norm-growth experiment."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.stats import spearmanr

from .dyadic_cubes import DyadicSystem, canonical_torus_system
from .haar_analysis import HaarSystem, NormedSpaceE, build_haar_system
from .metric_core import Measure, torus_grid
from .sparse_decomposition import TauMap
from .stochastic_norms import SCALAR, SignEnsemble, alpha_exponent, bochner_norm, randomized_norm


def canonical_tau_1d(system: DyadicSystem, m: int) -> TauMap:
    """``Q_j^k -> Q_(j+m mod b^k)^k`` on a canonical torus system.

    The containment parameter stored on the map is ``m`` itself; the tight
    dilation ``max(1, (m + 1) / 3)`` is recorded in ``notes``.
    """
    if system.canonical is None:
        raise ValueError("canonical_tau_1d needs a canonical torus system")
    if m < 1:
        raise ValueError("m must be at least 1")
    targets = [(np.arange(system.n_cubes(k)) + m) % system.n_cubes(k) for k in system.level_range]
    tau = TauMap(system, float(m), targets, 1.0)
    tau.notes.append(f"tight dilation {max(1.0, (m + 1) / 3)}")
    return tau


def random_tau(system: DyadicSystem, m: float, seed: int, mu: Measure | None = None,
               c_tau: float = 2.0) -> TauMap:
    """Seeded random admissible matching on every level.

    Admissible targets ``P`` of ``Q`` satisfy ``P subset mB_Q`` and a
    measure ratio within ``c_tau``. A level without a perfect admissible
    matching is left as the identity and noted.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    cloud = system.cloud
    mu = Measure.uniform(cloud.n) if mu is None else mu
    rng = np.random.default_rng(seed)
    targets, notes = [], []
    for k in system.level_range:
        n_k = system.n_cubes(k)
        masses = np.array([mu.of(system.members(k, a)) for a in range(n_k)])
        radius = m * system.ball_radius(k)
        cen = system.centers_at(k)
        lab = system.labels_at(k)
        # farthest member of each cube from each centre decides containment
        far = np.zeros((n_k, n_k))
        for start in range(0, n_k, 256):
            rows = np.arange(start, min(start + 256, n_k))
            for r, row in zip(rows, cloud.pairwise(cen[rows])):
                np.maximum.at(far[r], lab, row)
        ratio = masses[None, :] / masses[:, None]
        ok = (far < radius) & (ratio <= c_tau) & (ratio >= 1 / c_tau)
        row_perm = rng.permutation(n_k)
        col_perm = rng.permutation(n_k)
        graph = sp.csr_matrix(ok[np.ix_(row_perm, col_perm)].astype(np.int8))
        match = maximum_bipartite_matching(graph, perm_type="column")
        if np.any(match < 0):
            notes.append(f"level {k}: no perfect admissible matching, identity used")
            targets.append(np.arange(n_k))
            continue
        t = np.empty(n_k, dtype=np.int64)
        t[row_perm] = col_perm[match]
        targets.append(t)
    return TauMap(system, float(m), targets, c_tau, notes)


@dataclass(eq=False)
class ShiftOperator:
    """Linear extension of ``h_Q -> h_tau(Q)`` for one fixed branch per cube.

    Top-level averages are passed through unchanged.
    """

    tau: TauMap
    haar: HaarSystem
    theta: int = 1

    @property
    def domain(self) -> list[tuple[int, int]]:
        return [key for key in self.haar.cubes
                if (key[0], self.tau.index(*key)) in self.haar.functions]

    def image(self, key: tuple[int, int]) -> tuple[int, int]:
        return (key[0], self.tau.index(*key))

    def __post_init__(self):
        for key in self.haar.cubes:
            if self.image(key) not in self.haar.functions:
                raise ValueError(f"tau sends Haar cube {key} to a cube without Haar functions")

    def column_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """Matrix columns of ``h_Q`` and ``h_tau(Q)`` for every cube."""
        col = self.haar.column_of
        src = np.array([col[(k, a, self.theta)] for k, a in self.haar.cubes])
        dst = np.array([col[self.image((k, a)) + (self.theta,)] for k, a in self.haar.cubes])
        return src, dst


def apply_shift(T: ShiftOperator, coeffs: dict) -> dict:
    """Move the coefficient of ``Q`` to ``tau(Q)``."""
    out = {}
    for key, x in coeffs.items():
        key = tuple(key)
        if key not in T.haar.functions:
            raise KeyError(f"cube {key} outside the operator's domain")
        out[T.image(key)] = x
    return out


def synthesize(coeffs: dict, haar: HaarSystem, theta: int = 1) -> np.ndarray:
    """``sum_Q x_Q h_Q`` for coefficients keyed by cube."""
    n = haar.system.cloud.n
    out = None
    for key, x in coeffs.items():
        h = haar.evaluate(haar.function(key, theta))
        term = np.multiply.outer(h, np.asarray(x, dtype=float))
        out = term if out is None else out + term
    return np.zeros(n) if out is None else out


def lemma42_ratio(coeffs: dict, haar: HaarSystem, p: float, ens: SignEnsemble = SignEnsemble(),
                  E: NormedSpaceE = SCALAR, theta: int = 1) -> float:
    """``||sum x_Q h_Q||_p / ||sum eps_Q x_Q 1_Q / mu(Q)^(1/2)||_{Omega,p}``.

    Empty input returns 1.
    """
    if not coeffs:
        return 1.0
    mu, system = haar.mu, haar.system
    lhs = bochner_norm(synthesize(coeffs, haar, theta), p, mu, E)
    summands = []
    for key, x in coeffs.items():
        ind = np.zeros(system.cloud.n)
        members = system.members(*key)
        ind[members] = 1 / math.sqrt(mu.of(members))
        summands.append(np.multiply.outer(ind, np.asarray(x, dtype=float)))
    rhs = randomized_norm(summands, p, ens, mu, E)
    if rhs == 0:
        return 1.0 if lhs == 0 else math.inf
    return lhs / rhs


# --- norm-growth experiment ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    g: int = 12
    delta: float = 0.5
    p_list: list[float] = field(default_factory=lambda: [1.5, 2.0, 4.0])
    m_list: list[int] = field(default_factory=lambda: [2**i for i in range(11)])
    d: int = 1
    q: float = 2.0
    type_: float | None = None
    cotype: float | None = None
    trials: int = 1000
    seed: int = 0
    fit_m_max: int = 32

    def __post_init__(self):
        if not 1 <= self.g <= 12:
            raise ValueError("grid exponent g must lie in [1, 12]")
        if any(not 1 < p < math.inf for p in self.p_list):
            raise ValueError("every p must lie in (1, inf)")
        if any(m < 1 for m in self.m_list):
            raise ValueError("every m must be at least 1")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def space(self) -> NormedSpaceE:
        return NormedSpaceE(self.d, self.q, self.type_, self.cotype)


def _sample_coefficients(haar: HaarSystem, theta_cols: np.ndarray, trials: int, d: int,
                         seed: int) -> np.ndarray:
    """Coefficient draws, shape ``(n_cubes, samples, d)``.

    Random families (Gaussian, mass-weighted, single level, sparse, random
    chains) plus deterministic probes (single cube, level constant,
    alternating sign, unit chain).
    """
    system, mu = haar.system, haar.mu
    cubes = haar.cubes
    nc = len(cubes)
    levels = np.array([k for k, _ in cubes])
    root = np.array([math.sqrt(mu.of(system.members(k, a))) for k, a in cubes])
    rng = np.random.default_rng([seed, 7])
    out = np.zeros((nc, trials, d))
    kinds = 6
    for s in range(trials):
        kind = s % kinds
        if kind == 0:
            x = rng.standard_normal((nc, d))
        elif kind == 1:
            x = rng.standard_normal((nc, d)) * root[:, None]
        elif kind == 2:
            lev = rng.choice(np.unique(levels))
            x = rng.standard_normal((nc, d)) * (levels == lev)[:, None]
        elif kind == 3:
            x = rng.standard_normal((nc, d)) * (rng.random(nc) < 8 / nc)[:, None]
        else:
            # random dyadic chain, coefficients with or without mass scaling
            point = rng.integers(system.cloud.n)
            on_chain = np.array([system.labels_at(k)[point] == a for k, a in cubes])
            x = np.zeros((nc, d))
            signs = rng.choice((-1.0, 1.0), size=(nc, d)) if kind == 4 else 1.0
            x[on_chain] = (signs * root[:, None])[on_chain] if kind == 4 else root[on_chain, None]
        out[:, s] = x
    probes = []
    for i in (0, nc // 2, nc - 1):
        x = np.zeros((nc, d))
        x[i] = 1.0
        probes.append(x)
    for lev in np.unique(levels):
        sel = levels == lev
        probes.append(np.where(sel, 1.0, 0.0)[:, None] * np.ones(d))
        alt = np.array([(-1.0) ** a for _, a in cubes])
        probes.append(np.where(sel, alt, 0.0)[:, None] * np.ones(d))
    probes.append(np.array([1.0 if a == 0 else 0.0 for _, a in cubes])[:, None] * np.ones(d) * root[:, None])
    return np.concatenate([out, np.stack(probes, axis=1)], axis=1)


def _norms(values: np.ndarray, p: float, mu: Measure, E: NormedSpaceE) -> np.ndarray:
    """``||.||_p`` of every column of ``values`` (shape ``(n, samples, d)``)."""
    pointwise = E.norm(values) if values.shape[2] > 1 else np.abs(values[:, :, 0])
    return np.sum(mu.weights[:, None] * pointwise**p, axis=0) ** (1 / p)


@dataclass
class ExperimentResult:
    rows: list[dict]
    config: ExperimentConfig
    fits: dict

    def csv_text(self) -> str:
        header = "m,p,q_E,d,ratio,bound,fitC"
        lines = [header]
        for r in self.rows:
            lines.append(",".join([str(r["m"]), _fmt(r["p"]), _fmt(r["q_E"]), str(r["d"]),
                                   _fmt(r["ratio"]), _fmt(r["bound"]), _fmt(r["fitC"])]))
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.15g}"


def norm_growth_experiment(config: ExperimentConfig, haar: HaarSystem | None = None,
                           threads: int = 1) -> ExperimentResult:
    """Sampled lower bounds ``R(m, p)`` for the canonical shift on a torus grid.

    ``R`` is the largest observed ``||Tf||_p / ||f||_p``; ``bound(m)`` is
    ``(log(2m) + 1)**alpha``. For every ``p`` the least ``C`` with
    ``R <= C * bound`` over all ``m`` and over ``m <= fit_m_max`` is reported.
    ``threads`` spreads the shifts over workers; results do not depend on it.
    """
    E = config.space
    if haar is None:
        cloud = torus_grid(config.g)
        system = canonical_torus_system(cloud, config.delta)
        haar = build_haar_system(system, Measure.uniform(cloud.n))
    system, mu = haar.system, haar.mu
    H = haar.matrix
    col = haar.column_of
    cubes = haar.cubes
    src = np.array([col[(k, a, 1)] for k, a in cubes])
    X = _sample_coefficients(haar, src, config.trials, config.d, config.seed)
    ns = X.shape[1]
    # f = sum_Q x_Q h_Q: scatter coefficients into their matrix columns
    f = np.stack([H[:, src] @ X[:, :, j] for j in range(config.d)], axis=2)
    rows, fits = [], {}
    den = {p: _norms(f, p, mu, E) for p in config.p_list}

    def one_shift(m):
        tau = canonical_tau_1d(system, m)
        dst = np.array([col[(k, tau.index(k, a), 1)] for k, a in cubes])
        Tf = np.stack([H[:, dst] @ X[:, :, j] for j in range(config.d)], axis=2)
        out = {}
        for p in config.p_list:
            keep = den[p] > 0
            out[(m, p)] = float(np.max(_norms(Tf, p, mu, E)[keep] / den[p][keep]))
        return out

    ratios: dict[tuple[int, float], float] = {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for part in pool.map(one_shift, config.m_list):
            ratios.update(part)
    for p in config.p_list:
        alpha = alpha_exponent(E.type_, E.cotype, p)
        bound = {m: (math.log(2 * m) + 1) ** alpha for m in config.m_list}
        scaled = {m: ratios[(m, p)] / bound[m] for m in config.m_list}
        small = [m for m in config.m_list if m <= config.fit_m_max]
        fit_all = max(scaled.values())
        fit_small = max(scaled[m] for m in small) if small else math.nan
        ms = list(config.m_list)
        series = [ratios[(m, p)] for m in ms]
        if len(ms) > 2 and np.ptp(series) > 1e-9 * max(series):
            rho = float(spearmanr(series, [math.log(2 * m) for m in ms])[0])
        else:
            rho = math.nan
        fits[p] = {"alpha": alpha, "C": fit_all, "C_small": fit_small,
                   "stability": fit_all / fit_small if fit_small else math.nan,
                   "spearman": rho, "samples": ns}
        for m in config.m_list:
            rows.append({"m": m, "p": p, "q_E": E.cotype, "d": E.d, "ratio": ratios[(m, p)],
                         "bound": bound[m], "fitC": fit_all})
    rows.sort(key=lambda r: (r["p"], r["m"]))
    return ExperimentResult(rows, config, fits)


def config_dict(config: ExperimentConfig) -> dict:
    return asdict(config)
