"""Sweep mean-estimation MSE against the closed-form risk ceilings.

Runs the simulated-trials estimator over a (p, d, n, eps0) grid and writes a
tidy CSV, then reports any cell whose measured MSE crossed its worst-case
ceiling (expected occasionally at small trial counts, never persistently).

    python3 scripts/mean_est_sweep.py --out results/mean_est_sweep
"""

import argparse
import csv
import math

from cldp.cli import main as cldp_main


def run(out: str, trials: int, seed: int) -> int:
    args = [
        "mean-est",
        "--p", "1", "2", "inf",
        "--d", "8", "32", "128",
        "--n", "100", "1000",
        "--eps0", "0.5", "1.0", str(math.log(3.0)),
        "--trials", str(trials),
        "--seed", str(seed),
        "--out", out,
    ]
    code = cldp_main(args)
    if code != 0:
        return code

    with open(out, newline="") as fh:
        rows = list(csv.DictReader(r for r in fh if not r.startswith("#")))
    crossings = [r for r in rows if float(r["empirical_mse"]) > float(r["risk_upper_worst"])]
    for r in crossings:
        print(
            f"above ceiling: p={r['p']} d={r['d']} n={r['n']} eps0={r['epsilon0']}"
            f" mse={float(r['empirical_mse']):.4g} > {float(r['risk_upper_worst']):.4g}"
        )
    print(f"{len(crossings)}/{len(rows)} cells above their ceiling at {trials} trials")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="mean_est_sweep", help="output CSV path")
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    ns = parser.parse_args()
    raise SystemExit(run(ns.out, ns.trials, ns.seed))
