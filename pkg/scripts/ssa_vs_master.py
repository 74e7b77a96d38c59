"""Compare the empirical SSA law with the master-equation law on a small box.

Usage: python3 scripts/ssa_vs_master.py [--M 100000] [--threads 4]
"""

import argparse
import time

import numpy as np

from bdhop.config import build_model, example_config
from bdhop.master import MasterDistribution, StateSpaceIndex, build_generator, integrate_fke
from bdhop.measure import Configuration, SiteSpace
from bdhop.ssa import empirical_law, run_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=100_000)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--K", type=int, default=6)
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    space = SiteSpace.uniform_grid(2, 0.5)
    model = build_model(example_config(2, 0.5)["model"], space)
    k0 = np.array([1, 0])
    start = time.perf_counter()
    ens = run_ensemble(Configuration(args.n, k0), model, args.t, [args.t], args.M,
                       base_seed=args.seed, threads=args.threads, record_events=False)
    index = StateSpaceIndex(2, args.K)
    path = integrate_fke(MasterDistribution.dirac(k0, index), build_generator(model, args.n, index),
                         args.t, method="adaptive", t_eval=[0.0, args.t])
    emp = empirical_law(ens, args.t, args.K)
    exact = path.probs[-1]
    tv = float(np.abs(emp.probs - exact).sum()) + abs(emp.deficit - path.deficits[-1])
    print(f"{'state':>8} {'ssa':>9} {'master':>9}")
    for i in np.argsort(-exact)[:10]:
        print(f"{str(index.state_of(i).tolist()):>8} {emp.probs[i]:9.5f} {exact[i]:9.5f}")
    print(f"sum |p - q| = {tv:.4f} over M={args.M} trajectories ({time.perf_counter() - start:.1f} s)")


if __name__ == "__main__":
    main()
