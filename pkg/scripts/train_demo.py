"""Train the synthetic logistic task at a few privacy levels and compare.

Each arm shares the seed, so client sampling and data order are common random
numbers; the only difference is the local mechanism's noise. Leaves one trace
CSV plus a summary JSON per arm for plotting. Accounting stays off because
the per-round batch (k*s = 20) sits below the shuffling bound's validity;
see accountant_report.py for budgets at deployment scale.

    python3 scripts/train_demo.py --out results/train_demo
"""

import argparse
import math
import pathlib

from cldp.cli import main as cldp_main


def run(out: str, T: int, seed: int) -> int:
    pathlib.Path(out).parent.mkdir(parents=True, exist_ok=True)
    for eps0 in (1.0, 4.0, math.inf):
        tag = "inf" if math.isinf(eps0) else f"{eps0:g}"
        args = [
            "train",
            "--m", "100", "--k", "20", "--r", "10", "--s", "1",
            "--T", str(T),
            "--eps0", str(eps0), "--delta", "1e-5",
            "--p", "2", "--clip", "0.5", "--d", "20", "--diameter", "2",
            "--task", "logistic",
            "--account", "false",
            "--seed", str(seed),
            "--out", f"{out}_eps0_{tag}",
        ]
        code = cldp_main(args)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="train_demo", help="output stem, one CSV+JSON per arm")
    parser.add_argument("--T", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    ns = parser.parse_args()
    raise SystemExit(run(ns.out, ns.T, ns.seed))
