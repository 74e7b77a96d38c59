"""Print the energy-dissipation residual of the master and mean-field solvers under refinement.

Usage: python3 scripts/edb_refinement.py [--T 2.0]
"""

import argparse

import numpy as np

from bdhop.config import build_model, example_config
from bdhop.master import (
    StateSpaceIndex,
    build_generator,
    edb_residual_n,
    integrate_fke,
    poisson_reference,
    product_poisson,
)
from bdhop.meanfield import chain_rule_check, edb_residual_mf, integrate_meanfield
from bdhop.measure import SiteSpace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--K", type=int, default=12)
    args = ap.parse_args()

    cfg = example_config(2, 0.5)
    space = SiteSpace.uniform_grid(2, 0.5)
    model = build_model(cfg["model"], space)
    index = StateSpaceIndex(2, args.K)
    gen = build_generator(model, args.n, index)
    ref = poisson_reference(args.n, space, args.K)
    P0 = product_poisson(args.n * np.array([1.8, 0.3]) * space.weights, index)
    print("master: quadrature nodes, residual, observed order")
    prev = None
    for n_out in (51, 101, 201, 401, 801):
        r = edb_residual_n(integrate_fke(P0, gen, args.T, method="adaptive", n_out=n_out), gen, ref)
        order = "" if prev is None else f"{np.log2(prev / r):.2f}"
        print(f"  {n_out:5d}  {r:.3e}  {order}")
        prev = r

    cfg3 = example_config(3, 1.0)
    cfg3["model"]["c"] = {"name": "gaussian", "amplitude": 1.0, "length": 0.5}
    cfg3["model"]["h"] = {"name": "gaussian", "amplitude": 1.0, "length": 0.5}
    model3 = build_model(cfg3["model"], SiteSpace.uniform_grid(3, 1.0))
    print("mean field: dt, residual, chain-rule deviation")
    for dt in (0.05, 0.025, 0.0125, 0.00625, 0.003125):
        path = integrate_meanfield([1.8, 0.4, 1.1], model3, args.T, dt=dt)
        print(f"  {dt:<9g} {edb_residual_mf(path, model3):.3e}  {chain_rule_check(path).max_deviation:.3e}")


if __name__ == "__main__":
    main()
