"""Command-line runner: diraclab <command> [--config PATH] [--seed N] [--out DIR] [--jobs N]."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assembly import AssemblyError, assemble_A, assemble_D, assemble_Deps, export_matrix_market
from .config import ConfigError, ExperimentConfig, load_config
from .domain import BaseSpinorProfile, DomainError, make_domain, sample_phi0
from .experiments import (ExperimentError, algebra_suite, prepare, run_green_comparison, run_harnack,
                          run_linear_decay, run_nonlinear_decay, run_scale_collapse, sweep_regression)
from .solvers import SolverError
from .swalgebra import case_data, total_clifford

log = logging.getLogger("diraclab")

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
CSV_SCHEMA = "# schema: decay-csv v1"
CSV_COLUMNS = ("eps", "R", "shell_sup", "fit_slope", "fit_r2")
INFRA_ERRORS = (SolverError, ExperimentError, AssemblyError, DomainError, OSError)


def _profile(cfg: ExperimentConfig) -> BaseSpinorProfile:
    p = dict(cfg.profile)
    return BaseSpinorProfile(p.pop("kind"), **p)


def _map(fn, items, jobs: int):
    """Apply fn to items, concurrently when jobs > 1; results keep input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def write_decay_csv(path: Path, reports) -> None:
    with path.open("w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            for R, s in zip(r["shell_radii"], r["shell_sup"]):
                w.writerow([repr(r["eps"]), repr(R), repr(s), repr(r["slope"]), repr(r["r2"])])


# ---------------------------------------------------------------- jobs (top level for pickling)

def _decay_job(args):
    cfg_dict, eps = args
    cfg = ExperimentConfig(**cfg_dict)
    dom = make_domain(cfg.domain)
    data = case_data(cfg.case)
    tol = cfg.kernel_tol if cfg.mode == "kernel" else cfg.tol
    return run_linear_decay(dom, data, _profile(cfg), eps, mode=cfg.mode, seed=cfg.seed, tol=tol).to_dict()


def _nonlinear_job(args):
    cfg_dict, eps = args
    cfg = ExperimentConfig(**cfg_dict)
    dom = make_domain(cfg.domain)
    data = case_data(cfg.case)
    setup = prepare(dom, data, _profile(cfg))
    lin = run_linear_decay(dom, data, None, eps, seed=cfg.seed, tol=cfg.tol, setup=setup)
    nl = run_nonlinear_decay(dom, data, None, eps, cfg.coupling, R_K=lin.R_K, seed=cfg.seed,
                             tol=cfg.tol, c2=cfg.condition_c2, setup=setup)
    return lin.to_dict(), nl.to_dict()


def _green_job(args):
    cfg_dict, m, kappa = args
    cfg = ExperimentConfig(**cfg_dict)
    return run_green_comparison(cfg.green_R0, m, kappa, 3, cfg.green_N, cfg.ratio_margin).to_dict()


def _harnack_job(args):
    cfg_dict, m = args
    cfg = ExperimentConfig(**cfg_dict)
    return run_harnack(m, cfg.harnack_R0, cfg.green_N)


# ---------------------------------------------------------------- commands

def cmd_verify_algebra(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    defects = algebra_suite(cfg.cases, cfg.samples, cfg.seed, cfg.corrupt)
    failing = sorted(f"{case}:{name}" for case, d in defects.items() for name, v in d.items()
                     if v > cfg.algebra_tol)
    checks = sum(len(d) for d in defects.values())
    ok = not failing
    write_json(out / "verify-algebra.json", {"config": cfg.to_dict(), "seed": cfg.seed, "checks": checks,
                                             "defects": defects, "failing": failing, "pass": ok})
    for name in failing:
        print(f"FAIL {name}")
    print(f"{checks} checks, {len(failing)} failing")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_decay(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    reports = _map(_decay_job, [(cfg.to_dict(), e) for e in cfg.eps], jobs)
    summary = sweep_regression([_Fit(r) for r in reports])
    ok = all(r["slope"] < 0 for r in reports)
    if len(reports) >= 3:
        ok = ok and summary["r2"] > cfg.r2_min
    if len(reports) >= 2:
        ok = ok and summary["max_rel_deviation"] <= cfg.band
    if cfg.mode == "kernel":
        ok = ok and all(r["lambda_min"] < cfg.lambda_c / r["eps"] for r in reports)
    write_json(out / "decay.json", {"config": cfg.to_dict(), "seed": cfg.seed, "reports": reports,
                                    "summary": summary, "pass": bool(ok)})
    write_decay_csv(out / "decay.csv", reports)
    for r in reports:
        print(f"eps={r['eps']:g} slope={r['slope']:.4f} r2={r['r2']:.5f}")
    print(f"slope vs 1/eps: r2={summary['r2']:.5f} c={summary['c_fit']:.4f} "
          f"spread={summary['max_rel_deviation']:.3f}")
    return EXIT_PASS if ok else EXIT_FAIL


class _Fit:
    """Attribute view of a serialized DecayReport for sweep_regression."""

    def __init__(self, d):
        self.eps, self.slope, self.Lambda_K = d["eps"], d["slope"], d["Lambda_K"]


def cmd_nonlinear(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    pairs = _map(_nonlinear_job, [(cfg.to_dict(), e) for e in cfg.eps], jobs)
    ok = True
    rows = []
    for lin, nl in pairs:
        rel = abs(nl["decay"]["slope"] / lin["slope"] - 1.0)
        good = nl["converged"] and nl["condition_ok"] and rel <= 0.15
        ok = ok and good
        rows.append({"eps": lin["eps"], "linear_slope": lin["slope"], "nonlinear_slope": nl["decay"]["slope"],
                     "relative_change": rel, "pass": good})
        print(f"eps={lin['eps']:g} linear={lin['slope']:.4f} nonlinear={nl['decay']['slope']:.4f} "
              f"steps={len(nl['updates'])} {nl['diagnosis'] or 'ok'}")
    write_json(out / "nonlinear-decay.json", {"config": cfg.to_dict(), "seed": cfg.seed,
                                              "linear": [p[0] for p in pairs],
                                              "nonlinear": [p[1] for p in pairs],
                                              "summary": rows, "pass": bool(ok)})
    write_decay_csv(out / "nonlinear-decay.csv", [p[1]["decay"] for p in pairs])
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_collapse(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    dom = make_domain(cfg.domain)
    rep = run_scale_collapse(dom, case_data(cfg.case), cfg.eps, _profile(cfg),
                             s_range=tuple(cfg.collapse_range), seed=cfg.seed, tol=cfg.tol)
    ok = rep.max_distance <= cfg.collapse_max
    write_json(out / "scale-collapse.json", {"config": cfg.to_dict(), "seed": cfg.seed,
                                             "report": rep.to_dict(), "pass": bool(ok)})
    with (out / "scale-collapse.csv").open("w", newline="") as fh:
        fh.write("# schema: collapse-csv v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("eps", "s", "log_profile"))
        for e, prof in rep.profiles.items():
            for s, v in zip(rep.grid, prof):
                w.writerow([e, repr(s), repr(v)])
    print(f"max pairwise distance {rep.max_distance:.4f}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_green(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    items = [(cfg.to_dict(), m, k) for k in cfg.kappas for m in cfg.masses]
    reports = _map(_green_job, items, jobs)
    ok = all(r["bound_holds"] for r in reports if r["regime_ok"])
    write_json(out / "green.json", {"config": cfg.to_dict(), "seed": cfg.seed, "reports": reports,
                                    "pass": bool(ok)})
    for r in reports:
        print(f"kappa={r['kappa']:g} m={r['m']:g} max_ratio={r['max_ratio_grid']:.4f} "
              f"oracle_mismatch={r['oracle_mismatch']:.4f} regime={'ok' if r['regime_ok'] else 'violated'}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_harnack(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    reports = _map(_harnack_job, [(cfg.to_dict(), m) for m in cfg.masses], jobs)
    worst = [r["max_ratio"] for r in reports]
    spread = max(worst) / min(worst)
    ok = spread <= cfg.harnack_spread and all(np.isfinite(worst))
    write_json(out / "harnack.json", {"config": cfg.to_dict(), "seed": cfg.seed, "reports": reports,
                                      "spread": spread, "pass": bool(ok)})
    print(f"max ratios {', '.join(f'{w:.3f}' for w in worst)}; spread {spread:.3f}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_export_matrix(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    dom = make_domain(cfg.domain)
    data = case_data(cfg.case)
    op = assemble_D(dom, total_clifford(data))
    header = {"case": cfg.case, "h": repr(dom.h), "profile": cfg.profile["kind"], "eps": "none"}
    if cfg.export_eps is not None:
        A = assemble_A(dom, data, sample_phi0(dom, _profile(cfg), data))
        op = assemble_Deps(op, A, cfg.export_eps)
        header["eps"] = repr(cfg.export_eps)
    path = out / "operator.mtx"
    export_matrix_market(op, path, header)
    print(f"wrote {path} ({op.shape[0]}x{op.shape[1]}, nnz={op.nnz})")
    return EXIT_PASS


COMMANDS = {
    "verify-algebra": cmd_verify_algebra,
    "decay": cmd_decay,
    "nonlinear-decay": cmd_nonlinear,
    "scale-collapse": cmd_collapse,
    "green": cmd_green,
    "harnack": cmd_harnack,
    "export-matrix": cmd_export_matrix,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diraclab", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="INI experiment record")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="concurrent jobs for sweeps")
    p.add_argument("--corrupt", action="store_true", help="verify-algebra: flip one gamma block")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg.kind = args.command
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = str(args.out)
        if args.corrupt:
            cfg.corrupt = True
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, max(1, args.jobs))
    except INFRA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
