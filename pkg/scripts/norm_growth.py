"""Sweep the canonical shift over m and p and write the growth table.

    python3 scripts/norm_growth.py --g 12 --trials 1000 --out runs/norm_growth.csv
"""
import argparse
import json
import math
import time
from dataclasses import asdict
from pathlib import Path

from dyadic_shift.shift_operator import ExperimentConfig, norm_growth_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--g", type=int, default=12)
    ap.add_argument("--p", type=float, nargs="+", default=[1.5, 2.0, 4.0])
    ap.add_argument("--m-max-exp", type=int, default=10)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--q", type=float, default=2.0)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs/norm_growth.csv")
    args = ap.parse_args()

    cfg = ExperimentConfig(g=args.g, p_list=args.p, m_list=[2**i for i in range(args.m_max_exp + 1)],
                           d=args.d, q=args.q, trials=args.trials, seed=args.seed)
    start = time.time()
    res = norm_growth_experiment(cfg, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(res.csv_text())
    clean = lambda v: None if isinstance(v, float) and math.isnan(v) else v
    fits = {str(p): {k: clean(v) for k, v in f.items()} for p, f in res.fits.items()}
    out.with_suffix(".json").write_text(json.dumps(
        {"config": asdict(cfg), "fits": fits, "elapsed_s": time.time() - start}, indent=1))

    print(f"{'p':>5} {'alpha':>7} {'C':>8} {'C(m<=32)':>9} {'stability':>9} {'spearman':>8}")
    for p, f in res.fits.items():
        print(f"{p:5g} {f['alpha']:7.3f} {f['C']:8.4f} {f['C_small']:9.4f} "
              f"{f['stability']:9.4f} {f['spearman']:8.2f}")
    print(f"wrote {out} in {time.time() - start:.1f}s")


if __name__ == "__main__":
    main()
