"""Batch front end.

Usage::

    dyadic-shift SUBCOMMAND [--config run.json] [--seed N] [--out DIR] [--threads N]

Subcommands: build-nets, build-cubes, adjacent, decompose, haar,
shift-experiment, verify-all.

The point cloud comes from ``"input"`` in the config: a CSV/JSON file path,
or a builtin generator::

    {"generator": "torus_grid", "g": 8}
    {"generator": "random_doubling", "n": 256, "dim": 2, "seed": 0}

Exit status: 0 when every hard invariant held, 2 on an invariant failure
(``diagnostics.json`` is written), 1 on usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adjacent_systems import build_adjacent_family, find_host
from .dyadic_cubes import (DyadicSystem, build_dyadic_system, canonical_torus_system,
                           verify_axioms, verify_sandwich)
from .haar_analysis import (NormedSpaceE, build_haar_system, conditional_expectation, expand,
                            haar_envelope_check, reconstruct)
from .metric_core import (Measure, PointCloud, build_nested_nets, default_levels, load_cloud,
                          random_cloud, torus_grid)
from .shift_operator import ExperimentConfig, canonical_tau_1d, norm_growth_experiment, random_tau
from .sparse_decomposition import build_sparse_decomposition, compute_T, verify_decomposition

log = logging.getLogger("dyadic_shift")

SUBCOMMANDS = ("build-nets", "build-cubes", "adjacent", "decompose", "haar",
               "shift-experiment", "verify-all")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: dict | str = field(default_factory=lambda: {"generator": "torus_grid", "g": 8})
    delta: float = 0.25
    k_min: int | None = None
    k_max: int | None = None
    K: int = 5
    mode: str = "canonical1d"
    m_list: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    p_list: list[float] = field(default_factory=lambda: [1.5, 2.0, 4.0])
    E: dict = field(default_factory=lambda: {"d": 1, "q": 2.0})
    trials: int = 200
    balls: int = 200
    slack: float = 4.0
    experiment: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "runs/out"

    @classmethod
    def from_sources(cls, path: str | None, seed: int | None, out: str | None) -> "RunConfig":
        data = {}
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise UsageError(f"config file not found: {path}")
            try:
                data = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise UsageError(f"config is not valid JSON: {exc}") from exc
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if seed is not None:
            cfg.seed = seed
        if out is not None:
            cfg.out = out
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if isinstance(self.input, str):
            if not Path(self.input).is_file():
                raise UsageError(f"input file not found: {self.input}")
        elif self.input.get("generator") not in ("torus_grid", "random_doubling"):
            raise UsageError("input generator must be torus_grid or random_doubling")
        if not 0 < self.delta < 1:
            raise UsageError("delta must lie in (0, 1)")
        if self.K < 1 or self.trials < 1 or self.balls < 1:
            raise UsageError("K, trials and balls must be positive")
        if any(m < 1 for m in self.m_list):
            raise UsageError("every m must be at least 1")
        if any(not 1 < p < math.inf for p in self.p_list):
            raise UsageError("every p must lie in (1, inf)")
        if self.mode not in ("canonical1d", "random"):
            raise UsageError("mode must be canonical1d or random")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def space(self) -> NormedSpaceE:
        return NormedSpaceE(int(self.E.get("d", 1)), float(self.E.get("q", 2.0)),
                            self.E.get("t_E"), self.E.get("q_E"))


# --- pipeline pieces ----------------------------------------------------------------

def make_cloud(cfg: RunConfig) -> PointCloud:
    if isinstance(cfg.input, str):
        return load_cloud(cfg.input)
    gen = cfg.input
    if gen["generator"] == "torus_grid":
        return torus_grid(int(gen.get("g", 8)))
    return random_cloud(int(gen.get("n", 256)), int(gen.get("dim", 2)), int(gen.get("seed", cfg.seed)))


def _levels(cfg: RunConfig, cloud: PointCloud) -> tuple[int, int]:
    lo, hi = default_levels(cloud, cfg.delta)
    if cloud.is_uniform_torus_grid() and cfg.mode == "canonical1d":
        # room above level 0 so every cube has hosts 3 + T levels up
        lo = -(3 + compute_T(max(cfg.m_list), cfg.delta))
    lo = lo if cfg.k_min is None else cfg.k_min
    return lo, hi if cfg.k_max is None else cfg.k_max


def make_base_system(cfg: RunConfig, cloud: PointCloud) -> DyadicSystem:
    lo, hi = _levels(cfg, cloud)
    if cloud.is_uniform_torus_grid() and cfg.mode == "canonical1d":
        return canonical_torus_system(cloud, cfg.delta, lo, None if cfg.k_max is None else hi)
    return build_dyadic_system(cloud, build_nested_nets(cloud, cfg.delta, lo, hi))


def make_family(cfg: RunConfig, cloud: PointCloud):
    lo, hi = _levels(cfg, cloud)
    if cfg.mode == "canonical1d":
        return build_adjacent_family(cloud, cfg.delta, cfg.K, "canonical1d", lo,
                                     None if cfg.k_max is None else hi)
    return build_adjacent_family(cloud, cfg.delta, cfg.K, "random", lo, hi, seed=cfg.seed)


def step_nets(cfg, cloud, out: Path) -> dict:
    lo, hi = default_levels(cloud, cfg.delta) if cfg.k_min is None else (cfg.k_min, cfg.k_max)
    nets = build_nested_nets(cloud, cfg.delta, lo, hi)
    _write_json(out / "nets.json", nets.to_json())
    return {"nested": nets.is_nested(), "levels": [lo, hi]}


def step_cubes(cfg, cloud, out: Path) -> dict:
    lo, hi = default_levels(cloud, cfg.delta) if cfg.k_min is None else (cfg.k_min, cfg.k_max)
    system = build_dyadic_system(cloud, build_nested_nets(cloud, cfg.delta, lo, hi))
    _write_json(out / "cubes.json", system.to_json())
    ax = verify_axioms(system)
    sw = verify_sandwich(system)
    return {"axioms": asdict(ax), "axioms_ok": ax.ok, "sandwich": asdict(sw),
            "sandwich_ok": sw.ok, "cubes": system.total_cubes}


def step_adjacent(cfg, cloud, out: Path) -> dict:
    family = make_family(cfg, cloud)
    _write_json(out / "family.json", family.to_json())
    rng = np.random.default_rng([cfg.seed, 2])
    results, hosted, rechecked = [], 0, True
    finest = cfg.delta ** family.k_max
    for _ in range(cfg.balls):
        x, y = rng.integers(cloud.n, size=2)
        r = cloud.d(int(x), int(y))
        if r <= 0 or finest > cfg.slack * r / cfg.delta**2:
            continue
        res = find_host(family, [(int(x), r)], p=0, slack=cfg.slack)
        hosted += res.found
        if res.found:
            rechecked &= all(res.checks.values())
        results.append({"center": int(x), "radius": r, **res.to_json()})
    _write_json(out / "hosts.json", results)
    systems_ok = all(verify_axioms(s).ok for s in family.systems)
    return {"K": family.K, "systems_ok": systems_ok, "balls": len(results),
            "hosted": hosted, "rechecked": rechecked}


def step_decompose(cfg, cloud, out: Path) -> dict:
    family = make_family(cfg, cloud)
    base = family[1] if cfg.mode == "canonical1d" else make_base_system(cfg, cloud)
    mu = Measure.uniform(cloud.n)
    summary = {}
    for m in cfg.m_list:
        tau = (canonical_tau_1d(base, m) if base.canonical is not None
               else random_tau(base, m, cfg.seed, mu))
        dec = build_sparse_decomposition(base, family, tau)
        report = verify_decomposition(dec)
        report["tau"] = tau.verify(mu)
        report["excluded_mass"] = dec.excluded_mass(mu)
        report["hosting_exclusions"] = sum(e["reason"] == "hosting" for e in dec.excluded)
        _write_json(out / f"decomposition_m{m}.json", dec.to_json())
        summary[str(m)] = report
    return summary


def step_haar(cfg, cloud, out: Path) -> dict:
    system = make_base_system(cfg, cloud)
    mu = Measure.uniform(cloud.n)
    haar = build_haar_system(system, mu)
    _write_json(out / "haar.json", haar.to_json())
    gram_err = float(np.abs(haar.gram() - np.eye(len(haar.columns))).max()) if haar.columns else 0.0
    rng = np.random.default_rng([cfg.seed, 4])
    rt, tower = 0.0, 0.0
    levels = list(system.level_range)
    for _ in range(10):
        f = rng.standard_normal(cloud.n)
        rt = max(rt, float(np.abs(reconstruct(expand(f, haar), haar) - f).max()))
        j, k = sorted(rng.choice(levels, size=2))
        fine = conditional_expectation(f, system.labels_at(k), mu)
        both = conditional_expectation(fine, system.labels_at(j), mu)
        direct = conditional_expectation(f, system.labels_at(j), mu)
        tower = max(tower, float(np.abs(both - direct).max()))
    env = haar_envelope_check(haar)
    return {"gram_error": gram_err, "roundtrip_error": rt, "tower_error": tower,
            "envelope": asdict(env), "envelope_ok": env.ok}


def step_experiment(cfg, cloud, out: Path, threads: int = 1) -> dict:
    params = {"g": _grid_exponent(cloud), "delta": 0.5, "p_list": cfg.p_list,
              "m_list": cfg.m_list, "d": cfg.space.d, "q": cfg.space.q,
              "type_": cfg.space.type_, "cotype": cfg.space.cotype,
              "trials": cfg.trials, "seed": cfg.seed}
    params.update(cfg.experiment)
    exp = ExperimentConfig(**params)
    result = norm_growth_experiment(exp, threads=threads)
    (out / "shift_experiment.csv").write_text(result.csv_text())
    p2 = [r["ratio"] for r in result.rows if r["p"] == 2.0 and exp.d == 1]
    return {"fits": {str(p): v for p, v in result.fits.items()},
            "p2_isometry_error": max((abs(x - 1) for x in p2), default=0.0)}


def _grid_exponent(cloud: PointCloud) -> int:
    if not cloud.is_uniform_torus_grid():
        raise UsageError("shift-experiment needs a torus_grid input")
    return int(round(math.log2(cloud.n)))


HARD_CHECKS = {
    "build-nets": lambda r: r["nested"],
    "build-cubes": lambda r: r["axioms_ok"],
    "adjacent": lambda r: r["systems_ok"] and r["rechecked"],
    "decompose": lambda r: all(v["hosts_contain"] and v["hosts_disjoint"] and v["hosts_nested"] and v["disjoint_union"]
                               and v["count_ok"] and v["tau"]["ok"] for v in r.values()),
    "haar": lambda r: r["gram_error"] <= 1e-10 and r["roundtrip_error"] <= 1e-10
                      and r["tower_error"] <= 1e-12,
    "shift-experiment": lambda r: r["p2_isometry_error"] <= 1e-10,
}

STEPS = {
    "build-nets": step_nets,
    "build-cubes": step_cubes,
    "adjacent": step_adjacent,
    "decompose": step_decompose,
    "haar": step_haar,
    "shift-experiment": step_experiment,
}


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj)}")


def _summary_csv(reports: dict) -> str:
    lines = ["step,check,value"]
    for step in sorted(reports):
        for key, value in _flatten(reports[step]):
            lines.append(f"{step},{key},{_cell(value)}")
    return "\n".join(lines) + "\n"


def _flatten(data, prefix=""):
    if isinstance(data, dict):
        for k in sorted(data):
            yield from _flatten(data[k], f"{prefix}{k}.")
    else:
        yield prefix.rstrip("."), data


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return str(value)


def run(subcommand: str, cfg: RunConfig, threads: int = 1) -> int:
    out = Path(cfg.out)
    cloud = make_cloud(cfg)
    out.mkdir(parents=True, exist_ok=True)
    steps = list(STEPS) if subcommand == "verify-all" else [subcommand]
    if subcommand == "verify-all" and not cloud.is_uniform_torus_grid():
        steps.remove("shift-experiment")
    reports, failed = {}, []
    started = time.time()
    for step in steps:
        log.info("running %s", step)
        kwargs = {"threads": threads} if step == "shift-experiment" else {}
        reports[step] = STEPS[step](cfg, cloud, out, **kwargs)
        _write_json(out / f"report_{step}.json", reports[step])
        if not HARD_CHECKS[step](reports[step]):
            failed.append(step)
    if subcommand == "verify-all":
        (out / "summary.csv").write_text(_summary_csv(reports))
    manifest = {"subcommand": subcommand, "config": asdict(cfg), "config_sha256": cfg.digest(),
                "seed": cfg.seed, "version": __version__, "threads": threads,
                "started": started, "elapsed_s": time.time() - started,
                "artifacts": sorted(p.name for p in out.iterdir()), "failed": failed}
    _write_json(out / "manifest.json", manifest)
    if failed:
        _write_json(out / "diagnostics.json", {s: reports[s] for s in failed})
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadic-shift", description=__doc__.split("Usage::")[0].strip(),
        epilog="builtin generators: torus_grid (g) | random_doubling (n, dim, seed)",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for the experiment")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        cfg = RunConfig.from_sources(args.config, args.seed, args.out)
        return run(args.subcommand, cfg, args.threads)
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
