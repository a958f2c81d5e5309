"""Bochner norms and Rademacher-averaged norms, with Kahane/Stein harnesses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic_cubes import DyadicSystem
from .haar_analysis import NormedSpaceE, conditional_expectation
from .metric_core import Measure

SCALAR = NormedSpaceE()
EXACT_LIMIT = 20


@dataclass(frozen=True)
class SignEnsemble:
    """How to average over sign patterns.

    ``mode="exact"`` enumerates all ``2**N`` patterns (``N <= 20``);
    ``"monte_carlo"`` draws ``trials`` patterns; ``"auto"`` uses the closed
    form for ``p = 2`` in a Hilbert space, else exact when possible.
    """

    mode: str = "auto"
    trials: int = 4096
    seed: int = 0
    chunk: int = 256

    def __post_init__(self):
        if self.mode not in ("exact", "monte_carlo", "auto"):
            raise ValueError(f"unknown mode {self.mode!r}")


def sign_patterns(N: int) -> np.ndarray:
    if N > EXACT_LIMIT:
        raise ValueError(f"exact enumeration limited to N <= {EXACT_LIMIT}")
    codes = np.arange(2**N, dtype=np.int64)[:, None] >> np.arange(N)
    return 1.0 - 2.0 * (codes & 1)


def _mc_chunks(ens: SignEnsemble, N: int):
    """Fixed-size blocks keyed by ``(seed, block)`` so results do not depend on scheduling."""
    done = 0
    block = 0
    while done < ens.trials:
        size = min(ens.chunk, ens.trials - done)
        rng = np.random.default_rng([ens.seed, block])
        yield rng.choice((-1.0, 1.0), size=(size, N))
        done += size
        block += 1


def _weights(mu: Measure | None, n: int) -> np.ndarray:
    return np.ones(n) if mu is None else mu.weights


def bochner_norm(f: np.ndarray, p: float, mu: Measure | None = None,
                 E: NormedSpaceE = SCALAR) -> float:
    """``(sum_x mu(x) ||f(x)||_E^p)^(1/p)``; ``p = inf`` gives the max."""
    if p < 1:
        raise ValueError("p must be at least 1")
    f = np.asarray(f, dtype=float)
    pointwise = E.norm(f) if f.ndim > 1 else np.abs(f)
    if math.isinf(p):
        return float(pointwise.max(initial=0.0))
    w = _weights(mu, f.shape[0])
    return float(np.sum(w * pointwise**p) ** (1 / p))


def _pth_moments(stack: np.ndarray, signs: np.ndarray, p: float, w: np.ndarray,
                 E: NormedSpaceE) -> np.ndarray:
    """``||sum_i s_i g_i||_p^p`` for every sign row ``s``."""
    combos = np.tensordot(signs, stack, axes=(1, 0))  # (patterns, n[, d])
    pointwise = E.norm(combos) if combos.ndim > 2 else np.abs(combos)
    return np.sum(pointwise**p * w, axis=1)


def randomized_norm(summands, p: float, ens: SignEnsemble = SignEnsemble(),
                    mu: Measure | None = None, E: NormedSpaceE = SCALAR,
                    full: bool = False):
    """``(E_eps ||sum_i eps_i g_i||_p^p)^(1/p)``.

    With ``full=True`` returns ``(value, stderr)``; the error is zero for
    exact averages and a delta-method estimate for Monte Carlo.
    """
    stack = np.asarray(summands, dtype=float)
    N = stack.shape[0]
    if N == 0:
        return (0.0, 0.0) if full else 0.0
    w = _weights(mu, stack.shape[1])
    mode = ens.mode
    if mode == "auto":
        if p == 2 and E.is_hilbert:
            # cross terms vanish in expectation
            value = math.sqrt(sum(bochner_norm(g, 2, mu, E) ** 2 for g in stack))
            return (value, 0.0) if full else value
        mode = "exact" if N <= EXACT_LIMIT else "monte_carlo"
    if mode == "exact":
        if N > EXACT_LIMIT:
            raise ValueError(f"exact mode needs N <= {EXACT_LIMIT}, got {N}")
        pats = sign_patterns(N)
        total = 0.0
        for start in range(0, len(pats), 1024):
            total += float(_pth_moments(stack, pats[start:start + 1024], p, w, E).sum())
        value = (total / len(pats)) ** (1 / p)
        return (value, 0.0) if full else value
    moments = np.concatenate([_pth_moments(stack, s, p, w, E) for s in _mc_chunks(ens, N)])
    mean = float(moments.mean())
    value = mean ** (1 / p)
    if not full:
        return value
    se_mean = float(moments.std(ddof=1)) / math.sqrt(len(moments)) if len(moments) > 1 else 0.0
    stderr = value / (p * mean) * se_mean if mean > 0 else 0.0
    return value, stderr


def expected_norm_power(points: np.ndarray, p: float, ens: SignEnsemble, E: NormedSpaceE) -> float:
    """``E_eps ||sum_i eps_i x_i||_E^p`` for vectors ``x_i`` in ``E``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    N = len(pts)
    if ens.mode == "exact" or (ens.mode == "auto" and N <= EXACT_LIMIT):
        blocks = [sign_patterns(N)]
    else:
        blocks = _mc_chunks(ens, N)
    values = np.concatenate([E.norm(s @ pts) ** p for s in blocks])
    return float(values.mean())


@dataclass
class KahaneResult:
    lhs: float
    rhs: float
    passed: bool


def kahane_check(points, scalars, p: float, ens: SignEnsemble = SignEnsemble(),
                 E: NormedSpaceE = SCALAR, tol: float = 1e-12) -> KahaneResult:
    """Contraction principle ``E||sum eps c x||^p <= max|c|^p E||sum eps x||^p``."""
    points = np.asarray(points, dtype=float)
    c = np.asarray(scalars, dtype=float)
    if len(c) != len(points):
        raise ValueError("need one scalar per point")
    scaled = points * (c[:, None] if points.ndim > 1 else c)
    lhs = expected_norm_power(scaled, p, ens, E)
    rhs = float(np.max(np.abs(c))) ** p * expected_norm_power(points, p, ens, E)
    return KahaneResult(lhs, rhs, lhs <= rhs * (1 + tol) + tol)


def stein_check(fs, system: DyadicSystem, levels, p: float, ens: SignEnsemble = SignEnsemble(),
                mu: Measure | None = None, E: NormedSpaceE = SCALAR) -> float:
    """``||sum eps_k E[f_k | D^(l_k)]||_{Omega,p} / ||sum eps_k f_k||_{Omega,p}``."""
    levels = list(levels)
    if len(levels) != len(fs):
        raise ValueError("one level per function")
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be nondecreasing")
    mu = Measure.uniform(system.cloud.n) if mu is None else mu
    conditioned = [conditional_expectation(f, system.labels_at(k), mu) for f, k in zip(fs, levels)]
    num = randomized_norm(conditioned, p, ens, mu, E)
    den = randomized_norm(fs, p, ens, mu, E)
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def alpha_exponent(tE: float, qE: float, p: float) -> float:
    """``1/min(tE, p) - 1/max(qE, p)``."""
    if not 1 <= tE <= 2:
        raise ValueError("type must lie in [1, 2]")
    if not qE >= 2:
        raise ValueError("cotype must be at least 2")
    if not 1 < p < math.inf:
        raise ValueError("p must lie in (1, inf)")
    return 1 / min(tE, p) - 1 / max(qE, p)
