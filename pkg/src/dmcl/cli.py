"""Command-line interface: ``dmcl analyze | simulate | verify | reproduce | sweep``.

Exit codes: 0 success, 1 verification failure (or invalid configuration),
2 graph error, 3 data-richness error, 4 runtime divergence (Zeno, escape or
growth beyond the divergence factor).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dmcl import experiments as ex
from dmcl.certificates import algebraic_suite, iss_suite, lyapunov_suite, run_checks, spectral_suite
from dmcl.core import simulate
from dmcl.dataset import DataRichnessError, csr_level
from dmcl.graphs import GraphError, certify
from dmcl.hybrid import HybridError

EXIT_OK, EXIT_VERIFY, EXIT_GRAPH, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4
SUITES = ("lyapunov", "algebraic", "spectral", "iss", "all")

log = logging.getLogger("dmcl")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(payload: dict, out_dir: Path | None, name: str) -> None:
    text = json.dumps(_jsonable(payload), indent=2)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n")


def _config(args) -> dict:
    cfg = ex.load_config(args.config)
    ex.apply_overrides(cfg, getattr(args, "set", None))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.step is not None:
        ex.set_option(cfg, "horizon.step", args.step)
    # Paths given on the command line are relative to the working directory.
    if getattr(args, "data", None):
        cfg["data"] = {"path": str(Path(args.data).resolve())}
    if getattr(args, "graph", None):
        cfg["graph"] = {"path": str(Path(args.graph).resolve())}
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args) -> int:
    cfg = _config(args)
    problem = ex.problem_for(cfg)
    prm = problem.params
    cert = ex.certificate_for(problem)
    if not csr_level(problem.data_matrices)[1]:
        raise DataRichnessError(f"data are not cooperatively rich: alpha = {cert.alpha:.3e}")
    unit = certify(problem.graph, problem.data_matrices, prm.k_r, 1.0, omega=prm.omega, T0=prm.T0)
    T = args.T if args.T is not None else prm.T
    report = cert.to_dict()
    report.update({
        "sigma_omega_sq": cert.sigma_omega**2,
        "sigma_omega_sq_unit_kc": unit.sigma_omega**2,
        "T_upper_infinite": not math.isfinite(cert.T_upper),
        "window_feasible": cert.window_feasible,
        "T": T,
        "verdict": "inside window" if cert.contains(T) else "outside window",
    })
    if cert.contains(T):
        report["mu_T"] = cert.mu(T)
    _emit(report, args.out_dir, "analyze.json")
    return EXIT_OK


def _write_csv(result: ex.RunResult, cfg: dict, out_dir: Path | None) -> str | None:
    name = (cfg.get("output") or {}).get("csv")
    if not name or out_dir is None:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / Path(name).name
    result.arc.to_csv(path)
    return str(path)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    result = ex.run(cfg, step=args.step)
    summary = dict(result.summary)
    summary["csv"] = _write_csv(result, cfg, args.out_dir)
    _emit(summary, args.out_dir, "summary.json")
    return EXIT_DIVERGED if result.diverged else EXIT_OK


def _verify_checks(cfg: dict, suite: str, trials: int) -> list:
    problem = ex.problem_for(cfg)
    cert = ex.certificate_for(problem)
    prm = problem.params
    hz = ex.horizon(cfg)
    seed = int(cfg.get("seed", 0))
    checks = []
    if suite in ("algebraic", "all"):
        checks += algebraic_suite(trials, seed, problem, cert)
    if suite in ("spectral", "all"):
        checks += spectral_suite(problem, cert)
    if suite in ("lyapunov", "all"):
        arc = lay = None
        if prm.T > cert.T_lower:
            period = (prm.T - prm.T0) / (prm.k_a * prm.omega)
            arc, lay = simulate(problem, "centralized", t_max=min(hz["t_max"], 3.0 * period),
                                step=hz["step"], record_every=hz["record_every"])
        checks += lyapunov_suite(problem, cert, arc, lay, trials=min(trials, 100), seed=seed)
    if suite in ("iss", "all"):
        iss = cfg.get("iss") or {}
        family = ex.disturbance_family(cfg, problem.datasets)
        checks += iss_suite(problem, cert, family, float(iss.get("amplitude", 1e-3)),
                            float(iss.get("t_max", hz["t_max"])), hz["step"],
                            record_every=hz["record_every"])
    return checks


def cmd_verify(args) -> int:
    cfg = _config(args)
    report = run_checks(args.suite, _verify_checks(cfg, args.suite, args.trials))
    _emit(report.to_dict(), args.out_dir, f"verify_{args.suite}.json")
    if not report.passed:
        print("failed checks: " + ", ".join(report.failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = ex.load_config(args.preset)
    ex.apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = ex.reproduce(args.preset, cfg, step=args.step, out_dir=args.out_dir)
    _emit(out, args.out_dir, f"reproduce_{args.preset}.json")
    return EXIT_OK


def _sweep_one(job):
    cfg, param, value, step = job
    cfg = ex.set_option(cfg, param if "." in param else f"params.{param}", value)
    try:
        res = ex.run(cfg, step=step)
    except HybridError as exc:
        return {"value": value, "error": str(exc), "diverged": True}
    return {"value": value, **res.summary}


def _values(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = _values(" ".join(args.values))
    jobs = [(cfg, args.param, v, args.step) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    _emit({"param": args.param, "rows": rows}, args.out_dir, f"sweep_{args.param}.json")
    return EXIT_DIVERGED if any(r.get("diverged") for r in rows) else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=Path, default=None, help="directory for CSV/JSON outputs")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--step", type=float, default=None, help="integration step size")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers (sweep only)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. params.T=0.8")
    common.add_argument("--data", default=None, help="recorded data file ('agent k t phi... psi nu' lines)")
    common.add_argument("--graph", default=None, help="edge-list file ('i j weight' lines, 1-based)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dmcl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="spectral certificate and restart window")
    a.add_argument("--config", required=True, help="preset name or YAML file")
    a.add_argument("--T", type=float, default=None, help="restart threshold to judge (default params.T)")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[common], help="simulate one configuration")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", parents=[common], help="run numerical verification suites")
    v.add_argument("--config", required=True)
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--trials", type=int, default=1000)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reproduce", parents=[common], help="run a packaged preset study")
    r.add_argument("preset", choices=ex.PRESETS)
    r.set_defaults(func=cmd_reproduce)

    w = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    w.add_argument("--config", required=True)
    w.add_argument("--param", default="T", help="parameter name (params.*) or dotted key")
    w.add_argument("--values", nargs="+", required=True, help="values, space or comma separated")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GraphError as exc:
        print(f"graph error: {exc}", file=sys.stderr)
        return EXIT_GRAPH
    except DataRichnessError as exc:
        print(f"data-richness error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HybridError as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ex.ConfigError, FileNotFoundError) as exc:
        # Invalid input is not one of the categorised failures; report it as a failed check.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
