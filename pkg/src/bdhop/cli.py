"""Command-line entry point: ``bdhop {validate,ssa,master,meanfield,sweep}``.

Exit codes: 0 on success, 1 on a failed check or solver abort, 2 on an
unreadable or schema-invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

import bdhop
from bdhop.config import ConfigError, RunConfig, load_config
from bdhop.convergence import SweepPlan, rounded_counts, run_sweep
from bdhop.master import (
    MasterDistribution,
    SolverError,
    StateSpaceIndex,
    TruncationError,
    build_generator,
    check_reversibility,
    edb_residual_n,
    fke_diagnostics,
    integrate_fke,
    poisson_reference,
    product_poisson,
)
from bdhop.meanfield import (
    MeanFieldError,
    chain_rule_check,
    edb_residual_mf,
    integrate_meanfield,
    write_meanfield_csv,
)
from bdhop.measure import Configuration
from bdhop.rates import check_db_n
from bdhop.ssa import ensemble_summary, run_ensemble, write_snapshots_csv

log = logging.getLogger("bdhop")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

FKE_CSV_COLUMNS = ("t", "entropy", "D_bd", "D_h", "R_n", "edb_partial", "deficit")


def versions() -> dict:
    return {
        "bdhop": bdhop.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_manifest(out: Path, cfg: RunConfig, command: str, status: str, outputs: list, diagnostic=None) -> None:
    manifest = {
        "command": command,
        "status": status,
        "config": cfg.data,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "versions": versions(),
        "outputs": outputs,
        "diagnostic": diagnostic,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig, out: Path) -> tuple[int, list, dict]:
    block = cfg.data.get("validate", {})
    n_list = block.get("n_list", [1, 2, 8])
    K = block.get("K_max", 10)
    samples = block.get("samples", 50)
    tol = cfg.tol("db_tol", 1e-10)
    rng = np.random.default_rng(cfg.seed)
    S = cfg.space.size
    report = {"tolerance": tol, "db_n": {}, "reversibility": {}}
    for n in n_list:
        configs = [Configuration(n, rng.integers(0, K + 1, size=S)) for _ in range(samples)]
        report["db_n"][str(n)] = check_db_n(cfg.model, configs)
        index = StateSpaceIndex(S, K)
        ref = poisson_reference(n, cfg.space, K, tol=1.0)
        report["reversibility"][str(n)] = check_reversibility(build_generator(cfg.model, n, index), ref, relative=True)
    worst = max(list(report["db_n"].values()) + list(report["reversibility"].values()))
    report["max_violation"] = worst
    for n in n_list:
        print(f"n={n}: DB_n violation {report['db_n'][str(n)]:.3e}, "
              f"reversibility violation {report['reversibility'][str(n)]:.3e}")
    ok = worst <= tol
    print(f"max violation {worst:.3e} ({'ok' if ok else 'FAILED'}, tolerance {tol:.0e})")
    _write_json(out / "validate.json", report)
    return (EXIT_OK if ok else EXIT_FAIL), ["validate.json"], report


def cmd_ssa(cfg: RunConfig, out: Path) -> tuple[int, list, dict]:
    b = cfg.block("ssa")
    n = b["n"]
    if "counts" in b:
        counts = np.asarray(b["counts"])
    elif "u0" in b:
        counts, _ = rounded_counts(b["u0"], n, cfg.space)
    else:
        raise ConfigError("ssa block needs counts or u0")
    T = b["T"]
    times = b.get("times", np.linspace(0.0, T, 11).tolist())
    ens = run_ensemble(
        Configuration(n, counts), cfg.model, T, times, b["M"], base_seed=cfg.seed,
        threads=cfg.threads, record_events=b.get("record_events", False),
    )
    outputs = ["ssa_summary.json"]
    if b.get("write_snapshots", True):
        write_snapshots_csv(ens, out / "snapshots.csv")
        outputs.append("snapshots.csv")
    summary = ensemble_summary(ens)
    _write_json(out / "ssa_summary.json", summary)
    print(f"simulated {ens.M} trajectories at n={n}; final mean counts {np.round(summary['mean_counts'][-1], 4).tolist()}")
    return EXIT_OK, outputs, {}


def _master_initial(b: dict, cfg: RunConfig, index: StateSpaceIndex, n: int) -> MasterDistribution:
    kind = b.get("initial", "poisson")
    if kind == "reference":
        return poisson_reference(n, cfg.space, index.K_max, tol=cfg.tol("deficit_tol", 1e-6))
    u0 = np.asarray(b.get("u0", np.ones(cfg.space.size)), dtype=float)
    if kind == "poisson":
        return product_poisson(n * u0 * cfg.space.weights, index)
    k, _ = rounded_counts(u0, n, cfg.space)
    return MasterDistribution.dirac(k, index)


def cmd_master(cfg: RunConfig, out: Path) -> tuple[int, list, dict]:
    b = cfg.block("master")
    n, K, T = b["n"], b["K_max"], b["T"]
    tol = cfg.tol("deficit_tol", 1e-6)
    index = StateSpaceIndex(cfg.space.size, K)
    gen = build_generator(cfg.model, n, index)
    ref = poisson_reference(n, cfg.space, K, tol=tol)
    P0 = _master_initial(b, cfg, index, n)
    path = integrate_fke(
        P0, gen, T, dt=b.get("dt"), method=b.get("method", "adaptive"), n_out=b.get("n_out", 101),
        rtol=cfg.tol("rtol", 1e-10), atol=cfg.tol("atol", 1e-16), outflow_tol=tol,
    )
    diag = fke_diagnostics(path, gen, ref)
    with open(out / "fke_diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FKE_CSV_COLUMNS)
        for row in diag.rows():
            w.writerow([repr(x) for x in row])
    outputs = ["fke_diagnostics.csv", "master_summary.json"]
    if b.get("write_generator", False):
        (out / "generator.coo").write_text(gen.to_coo_text())
        outputs.append("generator.coo")
    summary = {
        "n": n, "K_max": K, "states": index.size,
        "edb_residual": edb_residual_n(path, gen, ref),
        "entropy_initial": float(diag.entropy[0]), "entropy_final": float(diag.entropy[-1]),
        "final_deficit": float(path.deficits[-1]),
        "final_mean_counts": path.at(len(path) - 1).mean_counts().tolist(),
    }
    _write_json(out / "master_summary.json", summary)
    print(f"master n={n} K_max={K}: EDB residual {summary['edb_residual']:.3e}, deficit {summary['final_deficit']:.2e}")
    return EXIT_OK, outputs, summary


def cmd_meanfield(cfg: RunConfig, out: Path) -> tuple[int, list, dict]:
    b = cfg.block("meanfield")
    path = integrate_meanfield(
        b["u0"], cfg.model, b["T"], dt=b.get("dt", 0.01), method=b.get("method", "rk4"),
        output_every=b.get("output_every", 1),
    )
    write_meanfield_csv(path, cfg.model, out / "meanfield.csv")
    chain = chain_rule_check(path)
    summary = {
        "edb_residual": edb_residual_mf(path, cfg.model),
        "chain_rule_max_deviation": chain.max_deviation,
        "chain_rule_skipped": chain.skipped,
        "u_final": path.u[-1].tolist(),
    }
    _write_json(out / "meanfield_summary.json", summary)
    print(f"mean field: EDB residual {summary['edb_residual']:.3e}, final u {np.round(path.u[-1], 6).tolist()}")
    return EXIT_OK, ["meanfield.csv", "meanfield_summary.json"], summary


def cmd_sweep(cfg: RunConfig, out: Path) -> tuple[int, list, dict]:
    b = cfg.block("sweep")
    plan = SweepPlan(
        model=cfg.model, u0=b["u0"], n_list=b["n_list"], T=b["T"], obs_times=b["obs_times"],
        mode=b.get("mode", "master"), initial=b.get("initial", "dirac"), K_max=b.get("K_max"),
        M=b.get("M", 1000), seed=cfg.seed, threads=cfg.threads, mf_dt=b.get("mf_dt", 1e-3),
        deficit_tol=cfg.tol("deficit_tol", 1e-6), lipschitz=b.get("lipschitz", False),
    )
    report = run_sweep(plan)
    report.write(out)
    summary = report.summary()
    checks = [v["monotone"] for v in summary["trend_w1"].values()]
    if plan.mode != "ssa":
        checks += [v["monotone"] for v in summary["trend_entropy_gap"].values()]
        checks += [v["monotone"] for v in summary["trend_poc"].values()]
    ok = all(checks) and not report.failures
    for t, v in summary["trend_w1"].items():
        print(f"t={t}: w1 to Dirac {np.round(v['values'], 5).tolist()} ({'decreasing' if v['monotone'] else 'NOT decreasing'})")
    if report.failures:
        print(f"{len(report.failures)} failed cells: {report.failures}")
    return (EXIT_OK if ok else EXIT_FAIL), ["sweep.csv", "sweep_summary.json"], summary


COMMANDS = {
    "validate": cmd_validate,
    "ssa": cmd_ssa,
    "master": cmd_master,
    "meanfield": cmd_meanfield,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdhop", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default="out", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for ensembles and sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, environ=os.environ)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            cfg = load_config({**cfg.data, **overrides})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, outputs, _ = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TruncationError, MeanFieldError) as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        write_manifest(out, cfg, args.command, "aborted", [], f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL
    write_manifest(out, cfg, args.command, "ok" if code == EXIT_OK else "failed", outputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
