"""Run the large-population sweep and the propagation-of-chaos sweep and print the trends.

Usage: python3 scripts/run_sweep.py [--out results/sweep]
"""

import argparse
import json
from pathlib import Path

from bdhop.config import build_model, example_config
from bdhop.convergence import SweepPlan, run_sweep
from bdhop.measure import SiteSpace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/sweep")
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    space = SiteSpace.uniform_grid(2, 0.5)
    model = build_model(example_config(2, 0.5)["model"], space)
    obs = [t for t in (0.25, 0.5, 1.0, 2.0) if t <= args.T]
    for name, initial, u0 in (("dirac", "dirac", [2.0, 1.0]), ("poisson", "poisson", [1.6, 0.6])):
        plan = SweepPlan(model, u0, args.n, args.T, obs, initial=initial, threads=args.threads,
                         lipschitz=initial == "dirac")
        report = run_sweep(plan)
        report.write(Path(args.out) / name)
        print(f"== {name} initial data, u0={u0}")
        for metric, strict in (("w1_to_dirac", True), ("entropy_gap", True), ("poc_entropy", False)):
            for t, v in report.trend(metric, strict).items():
                vals = ", ".join(f"{x:.4g}" for x in v["values"])
                print(f"  {metric:12s} t={t:<5g} [{vals}] monotone={v['monotone']} ratio={v['ratio']:.3f}")
        if report.lipschitz:
            print(f"  speed estimates {json.dumps({str(k): round(v, 3) for k, v in report.lipschitz.items()})}"
                  f" vs bound {report.lipschitz_bound:.3f}")
        if report.failures:
            print(f"  failures: {report.failures}")


if __name__ == "__main__":
    main()
