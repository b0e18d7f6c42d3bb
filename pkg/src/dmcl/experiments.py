"""Experiment configuration, packaged presets and reproducible study runners.

Configurations are nested dictionaries (loaded from YAML) with the keys

``graph.{preset,n}|graph.path``, ``theta_star``, ``regressor``,
``data.{path|synthesize}``, ``params.{k_r,k_t,k_c,T0,T,omega,k_a}``,
``restart.{mode,eta,r}``, ``disturbance.{kind,amplitude,freq,recorded}``,
``initial.{theta0,tau0}``, ``horizon.{t_max,j_max,step,record_every}``,
``output.csv`` and, for the closed-loop models, an ``mrac`` or ``feedopt`` block.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from dmcl.applications import (
    FeedbackOptConfig,
    MracConfig,
    circle_initial_states,
    feedback_opt_closed_loop,
    feedopt_record_data,
    mrac_closed_loop,
    mrac_record_data,
    radial_data_points,
)
from dmcl.core import (
    RESTART_MODES,
    DMCLParams,
    DMCLProblem,
    first_crossing,
    first_order_baseline,
    restart_contraction_fit,
    simulate,
    sync_check,
    theta_error_norm,
)
from dmcl.dataset import (
    Disturbance,
    sinusoid_disturbance,
    exponential_regressor,
    identification_regressor,
    load_datasets,
    synthesize_dataset,
    with_recorded_noise,
    zero_disturbance,
)
from dmcl.graphs import Digraph, GraphError, SpectralCertificate, certify, load_edge_list, preset_graph
from dmcl.hybrid import HybridArc

PRESETS = ("example1", "estimation", "mrac", "feedopt", "rate")
DIVERGENCE_FACTOR = 1e3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# loading


def preset_path(name: str) -> Path:
    ref = resources.files("dmcl") / "presets" / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return Path(str(ref))


def load_config(source) -> dict:
    """Load a config from a preset name, a YAML path or a dict (deep-copied)."""
    if isinstance(source, dict):
        cfg = copy.deepcopy(source)
        base = Path.cwd()
    else:
        path = Path(source)
        if not path.exists() and not path.suffix:
            path = preset_path(str(source))
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        cfg = yaml.safe_load(path.read_text()) or {}
        base = path.parent
    cfg.setdefault("_base", str(base))
    return cfg


def set_option(cfg: dict, dotted: str, value) -> dict:
    """Set ``cfg['a']['b'] = value`` for ``dotted = 'a.b'``; ``value`` strings are YAML-parsed."""
    if isinstance(value, str):
        value = yaml.safe_load(value)
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value
    return cfg


def apply_overrides(cfg: dict, overrides) -> dict:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        set_option(cfg, key.strip(), value.strip())
    return cfg


# ---------------------------------------------------------------------------
# building blocks


def build_graph(cfg: dict) -> Digraph:
    g = cfg.get("graph") or {}
    if "path" in g:
        return load_edge_list(_resolve(cfg, g["path"]))
    if "preset" in g:
        return preset_graph(str(g["preset"]), int(g["n"]))
    raise ConfigError("graph needs either 'path' or 'preset' and 'n'")


def _resolve(cfg: dict, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def build_regressors(cfg: dict, N: int):
    kind = cfg.get("regressor", "identification")
    if kind == "identification":
        return [identification_regressor(i + 1) for i in range(N)]
    if isinstance(kind, dict) and "coef" in kind:
        # Shared (1-D) or per-agent (2-D) coefficients and rates.
        coef = np.atleast_2d(np.asarray(kind["coef"], dtype=float))
        rate = np.atleast_2d(np.asarray(kind["rate"], dtype=float))
        coef = np.broadcast_to(coef, (N, coef.shape[1]))
        rate = np.broadcast_to(rate, coef.shape)
        return [exponential_regressor(coef[i], rate[i]) for i in range(N)]
    raise ConfigError(f"unsupported regressor specification {kind!r}")


def sample_times(design: dict, N: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-agent recording times for the synthetic data designs.

    ``scaled``: agent ``i`` (1-based) records at ``base_times / i``, so all data
    matrices coincide for the identification regressors. ``staggered``: agent
    ``i`` (0-based) records at ``offset * i + spacing * k``. ``random``:
    ``count`` uniform times on ``[0, t_max]``. ``common``: the same ``times``.
    """
    kind = design.get("design", "common")
    if kind == "scaled":
        base = np.asarray(design["base_times"], dtype=float)
        return [base / (i + 1) for i in range(N)]
    if kind == "staggered":
        k = np.arange(int(design.get("count", 5)))
        return [float(design["offset"]) * i + float(design["spacing"]) * k for i in range(N)]
    if kind == "random":
        return [np.sort(rng.uniform(0.0, float(design.get("t_max", 1.0)), int(design["count"]))) for _ in range(N)]
    if kind == "common":
        return [np.asarray(design["times"], dtype=float)] * N
    raise ConfigError(f"unknown data design {kind!r}")


def disturbance_family(cfg: dict, datasets):
    """Map an amplitude ``a`` to the configured disturbance scaled to ``a``.

    Recorded noise follows a deterministic alternating pattern
    ``a * recorded * (-1)^k`` so that its sup-norm is known exactly.
    """
    d = cfg.get("disturbance") or {}
    kind = d.get("kind", "none")
    if kind not in ("none", "sinusoid"):
        raise ConfigError(f"unknown disturbance kind {kind!r}")
    freq = float(d.get("freq", 1.0))
    rec = float(d.get("recorded", 0.0))
    pattern = [rec * (-1.0) ** np.arange(len(ds)) for ds in datasets] if rec else None
    N = len(datasets)
    return lambda a: sinusoid_disturbance(N, float(a), freq, pattern)


def build_disturbance(cfg: dict, datasets) -> Disturbance:
    d = cfg.get("disturbance") or {}
    amp = float(d.get("amplitude", 0.0))
    if d.get("kind", "none") == "none" or amp == 0.0:
        return zero_disturbance(len(datasets))
    return disturbance_family(cfg, datasets)(amp)


def build_params(cfg: dict, **changes) -> DMCLParams:
    p = dict(cfg.get("params") or {})
    r = cfg.get("restart") or {}
    if r.get("eta") is not None:
        p["eta"] = tuple(int(v) for v in r["eta"])
    if r.get("r") is not None:
        p["r"] = tuple(float(v) for v in np.atleast_1d(r["r"]))
    p.update(changes)
    try:
        return DMCLParams(**{k: (float(v) if k not in ("eta", "r", "tie_rule") else v) for k, v in p.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad params block: {exc}") from exc


def restart_mode(cfg: dict) -> str:
    mode = (cfg.get("restart") or {}).get("mode", "centralized")
    if mode not in RESTART_MODES:
        raise ConfigError(f"restart.mode must be one of {RESTART_MODES}")
    return mode


def _noise(cfg: dict, datasets, rng):
    std = float((cfg.get("data") or {}).get("synthesize", {}).get("noise", 0.0) or 0.0)
    if not std:
        return None
    return [rng.normal(0.0, std, len(ds)) for ds in datasets]


def build_problem(cfg: dict, seed: int | None = None, **param_changes) -> DMCLProblem:
    """Graph, data, disturbance and gains for the estimation model."""
    rng = np.random.default_rng(cfg.get("seed", 0) if seed is None else seed)
    graph = build_graph(cfg)
    N = graph.n_nodes
    theta_star = np.asarray(cfg["theta_star"], dtype=float)
    params = build_params(cfg, **param_changes)
    data = cfg.get("data") or {}
    regs = build_regressors(cfg, N)
    if "path" in data:
        datasets = load_datasets(_resolve(cfg, data["path"]), N)
    else:
        times = sample_times(data.get("synthesize") or {}, N, rng)
        datasets = [synthesize_dataset(regs[i], theta_star, times[i], agent_id=i) for i in range(N)]
        noise = _noise(cfg, datasets, rng)
        if noise is not None:
            datasets = [synthesize_dataset(regs[i], theta_star, times[i], noise[i], agent_id=i) for i in range(N)]
    dist = build_disturbance(cfg, datasets)
    if dist.recorded:
        datasets = with_recorded_noise(datasets, theta_star, dist)
    return DMCLProblem(graph, datasets, theta_star, params, regs, dist)


def problem_for(cfg: dict, seed: int | None = None) -> DMCLProblem:
    """Estimation problem behind any model; closed loops contribute their recorded data."""
    model = cfg.get("model", "estimation")
    if model == "estimation":
        return build_problem(cfg, seed)
    if model in ("mrac", "feedopt"):
        config, graph, datasets = (build_mrac if model == "mrac" else build_feedopt)(cfg)
        return DMCLProblem(graph, datasets, config.theta_star, build_params(cfg))
    raise ConfigError(f"unknown model {model!r}")


def certificate_for(problem: DMCLProblem) -> SpectralCertificate:
    prm = problem.params
    sup_phi = max((r.sup_bound for r in problem.regressors or []), default=0.0)
    return certify(problem.graph, problem.data_matrices, prm.k_r, prm.k_c, k_t=prm.k_t,
                   phi_bar=sup_phi, omega=prm.omega, T0=prm.T0)


def initial_state(cfg: dict, problem: DMCLProblem, mode: str):
    init = cfg.get("initial") or {}
    nt = problem.N if mode == "decentralized" else 1
    theta0 = init.get("theta0")
    tau0 = init.get("tau0")
    return problem.initial_state(theta0, tau0=tau0, nt=nt)


def horizon(cfg: dict) -> dict:
    h = dict(cfg.get("horizon") or {})
    return {"t_max": float(h.get("t_max", 10.0)), "step": float(h.get("step", 1e-3)),
            "j_max": int(h["j_max"]) if h.get("j_max") is not None else 10**9,
            "record_every": int(h.get("record_every", 10))}


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunResult:
    arc: HybridArc
    summary: dict
    extra: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return bool(self.summary.get("diverged"))


def _window_summary(cert: SpectralCertificate, T: float) -> dict:
    return {"T_lower": cert.T_lower, "T_upper": cert.T_upper, "T_star": cert.T_star,
            "T": T, "T_in_window": cert.contains(T), "alpha": cert.alpha}


def run_estimation(cfg: dict, seed: int | None = None, step: float | None = None,
                   backend: str | None = None) -> RunResult:
    """Simulate the estimator alone with the configured restart mode."""
    problem = build_problem(cfg, seed)
    mode = restart_mode(cfg)
    hz = horizon(cfg)
    if step is not None:
        hz["step"] = float(step)
    x0 = initial_state(cfg, problem, mode)
    t0 = time.perf_counter()
    arc, lay = simulate(problem, mode, t_max=hz["t_max"], step=hz["step"], x0=x0,
                        record_every=hz["record_every"], j_max=hz["j_max"], backend=backend)
    wall = time.perf_counter() - t0
    err = theta_error_norm(arc, lay, problem.theta_star)
    summary = {
        "model": "estimation", "mode": mode, "t_final": float(arc.t[-1]), "jumps": arc.n_jumps,
        "theta_error_initial": float(err[0]), "theta_error_final": float(err[-1]),
        "theta_error_max": float(err.max()), "growth_factor": float(err.max() / err[0]) if err[0] else 0.0,
        "wall_time_s": wall,
    }
    summary["diverged"] = bool(summary["growth_factor"] >= DIVERGENCE_FACTOR or not np.isfinite(err[-1]))
    t_from = 0.0
    if mode == "decentralized":
        sync = sync_check(arc, problem.params.T0, problem.params.T, lay, tol=1e-9)
        summary["sync_time"] = sync.t_star
        summary["sync_jump"] = sync.j_star
        t_from = sync.t_star
    if mode != "none" and math.isfinite(t_from):
        # Log-contraction of |theta~|^2 per full restart (per cascade once synchronised).
        slope, ks, _ = restart_contraction_fit(arc, lay, problem.theta_star, problem.params.T0, t_from=t_from)
        if ks.size >= 2:
            summary["per_jump_log_contraction"] = slope
    try:
        cert = certificate_for(problem)
        summary["certificate"] = _window_summary(cert, problem.params.T)
    except (GraphError, ValueError) as exc:  # the certificate is informative only here
        summary["certificate"] = {"error": str(exc)}
    arc.diagnostics = {"theta_error": err}
    return RunResult(arc, summary, {"problem": problem, "layout": lay, "theta_error": err})


# --- MRAC -------------------------------------------------------------------


def build_mrac(cfg: dict):
    m = cfg["mrac"]
    graph = build_graph(cfg)
    N = graph.n_nodes
    b = np.array([(2 * i - 1) / (2 * i) for i in range(1, N + 1)])
    B = np.stack([np.zeros(N), b], axis=1)
    A = np.tile(np.asarray(m.get("A", [[0.0, 1.0], [0.0, 0.0]]), dtype=float), (N, 1, 1))
    ref = m.get("reference", {})
    config = MracConfig(A=A, B=B, A_r=ref.get("A_r", [[0.0, 1.0], [-1.0, -1.0]]),
                        B_r=ref.get("B_r", [0.0, 1.0]), K=m.get("K", [1.0, 1.0]),
                        theta_star=cfg["theta_star"], r=float(m.get("r", 0.0)),
                        chi0=circle_initial_states(N, float(m["init_radius"])),
                        escape_bound=float(m.get("escape_bound", 1e6)))
    datasets = mrac_record_data(config, m.get("sample_times", [0.0, 1.5]))
    return config, graph, datasets


def run_mrac(cfg: dict, step: float | None = None, backend: str | None = None) -> RunResult:
    config, graph, datasets = build_mrac(cfg)
    params = build_params(cfg)
    mode = restart_mode(cfg)
    hz = horizon(cfg)
    t0 = time.perf_counter()
    res = mrac_closed_loop(config, params, graph, datasets, hz["t_max"], step or hz["step"], mode,
                           record_every=hz["record_every"], backend=backend)
    wall = time.perf_counter() - t0
    base = res.baseline_theta_error()
    te = res.plant["tracking_error"]
    summary = {
        "model": "mrac", "mode": mode, "jumps": res.arc.n_jumps, "wall_time_s": wall,
        "alpha": float(np.linalg.eigvalsh(sum(res.problem.data_matrices))[0]),
        "theta_error_final": float(res.theta_error[-1]),
        "tracking_error_final_max": float(te[-1].max()),
        "time_to_theta_0.1": res.time_to(0.1),
        "baseline_time_to_theta_0.1": first_crossing(res.t, base, 0.1),
        "baseline_theta_error_final": float(base[-1]),
        "diverged": False,
    }
    cert = certificate_for(res.problem)
    summary["certificate"] = _window_summary(cert, params.T)
    res.arc.diagnostics = {"theta_error": res.theta_error, "theta_error_first_order": base,
                           **{f"tracking_error_{i}": te[:, i] for i in range(config.N)}}
    return RunResult(res.arc, summary, {"result": res, "config": config})


# --- feedback optimisation ----------------------------------------------------


def build_feedopt(cfg: dict):
    f = cfg["feedopt"]
    graph = build_graph(cfg)
    N = graph.n_nodes
    ang = 2.0 * np.pi * np.arange(1, N + 1) / N
    xi = float(f.get("center_radius", 1.0)) * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    idx = np.arange(1, N + 1, dtype=float)
    config = FeedbackOptConfig(a_rate=idx, b_gain=idx, w=f["w"], d=f["d"], xi=xi,
                               radius=float(f.get("radius", 2.0)), theta_star=cfg["theta_star"],
                               eps_u=float(f.get("eps_u", 0.01)),
                               escape_bound=float(f.get("escape_bound", 1e6)))
    points = radial_data_points(config, float(f["data_offset"]))
    datasets = feedopt_record_data(config, points)
    return config, graph, datasets


def run_feedopt(cfg: dict, step: float | None = None, backend: str | None = None) -> RunResult:
    config, graph, datasets = build_feedopt(cfg)
    params = build_params(cfg)
    mode = restart_mode(cfg)
    hz = horizon(cfg)
    t0 = time.perf_counter()
    res = feedback_opt_closed_loop(config, params, graph, datasets, hz["t_max"], step or hz["step"], mode,
                                   record_every=hz["record_every"], backend=backend)
    wall = time.perf_counter() - t0
    base = res.baseline_theta_error()
    u_final = res.plant["u"][-1]
    dist = [float(np.linalg.norm(u_final[i] - config.maximizer(i))) for i in range(config.N)]
    summary = {
        "model": "feedopt", "mode": mode, "jumps": res.arc.n_jumps, "wall_time_s": wall,
        "alpha": float(np.linalg.eigvalsh(sum(res.problem.data_matrices))[0]),
        "theta_error_final": float(res.theta_error[-1]),
        "time_to_theta_0.1": res.time_to(0.1),
        "baseline_time_to_theta_0.1": first_crossing(res.t, base, 0.1),
        "baseline_theta_error_final": float(base[-1]),
        "u_final": u_final.tolist(),
        "maximizers": [config.maximizer(i).tolist() for i in range(config.N)],
        "distance_to_maximizer": dist,
        "diverged": False,
    }
    cert = certificate_for(res.problem)
    summary["certificate"] = _window_summary(cert, params.T)
    res.arc.diagnostics = {"theta_error": res.theta_error, "theta_error_first_order": base,
                           **{f"J_{i}": res.plant["J"][:, i] for i in range(config.N)}}
    return RunResult(res.arc, summary, {"result": res, "config": config})


def run(cfg: dict, seed: int | None = None, step: float | None = None,
        backend: str | None = None) -> RunResult:
    model = cfg.get("model", "estimation")
    if model == "estimation":
        return run_estimation(cfg, seed, step, backend)
    if model == "mrac":
        return run_mrac(cfg, step, backend)
    if model == "feedopt":
        return run_feedopt(cfg, step, backend)
    raise ConfigError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# studies


def estimation_study(cfg: dict, fractions=(0.2, 0.4, 0.6, 0.95), step: float | None = None,
                     sink=None) -> dict:
    """Complete graph at ``T*`` versus the first-order baseline, plus a ``T`` sweep on the cycle.

    The cycle sweep places ``T = T_lower + f (T_upper - T_lower)`` for each
    fraction ``f`` and records the time to ``|theta~| <= 1e-4`` and the mean
    log error, the two transient metrics.
    """
    sink = sink or (lambda name, arc: None)
    hz = horizon(cfg)
    h = step or hz["step"]
    n = int(cfg["graph"]["n"])
    out: dict = {}
    c = copy.deepcopy(cfg)
    c["graph"] = {"preset": "complete", "n": n}
    prob = build_problem(c)
    cert = certificate_for(prob)
    T = cert.T_star if math.isfinite(cert.T_star) else float(c["params"]["T"])
    prob = prob.replace_params(T=T)
    arc, lay = simulate(prob, "centralized", t_max=hz["t_max"], step=h, record_every=hz["record_every"])
    e = theta_error_norm(arc, lay, prob.theta_star)
    fo = first_order_baseline(prob, arc.t)
    arc.diagnostics = {"theta_error": e, "theta_error_first_order": fo}
    sink("complete", arc)
    out["complete"] = {"T": T, "window": (cert.T_lower, cert.T_upper), "final": float(e[-1]),
                       "t_1e-4": first_crossing(arc.t, e, 1e-4),
                       "baseline_t_1e-4": first_crossing(arc.t, fo, 1e-4),
                       "baseline_final": float(fo[-1])}
    c["graph"] = {"preset": "cycle", "n": n}
    prob = build_problem(c)
    cert = certificate_for(prob)
    rows = []
    for f in fractions:
        T = cert.T_lower + f * (cert.T_upper - cert.T_lower)
        pr = prob.replace_params(T=T)
        arc, lay = simulate(pr, "centralized", t_max=hz["t_max"], step=h, record_every=hz["record_every"])
        e = theta_error_norm(arc, lay, pr.theta_star)
        arc.diagnostics = {"theta_error": e}
        sink(f"cycle_f{f:g}", arc)
        rows.append({"fraction": f, "T": T, "final": float(e[-1]),
                     "t_1e-4": first_crossing(arc.t, e, 1e-4),
                     "mean_log10_error": float(np.mean(np.log10(np.maximum(e, 1e-300))))})
    out["cycle"] = {"window": (cert.T_lower, cert.T_upper), "sigma_omega_sq": cert.sigma_omega**2,
                    "alpha": cert.alpha, "sweep": rows}
    return out


def rate_sweep(cfg: dict, factors=None, jumps: float = 10.5, step: float | None = None,
               mode: str = "centralized", sink=None) -> dict:
    """Per-jump and per-unit-time contraction over ``T = factor * T*``.

    Each run lasts ``jumps`` restart periods; the slope of
    ``log |theta~(t_j, j)|^2`` over restarts ``2..J`` is compared with ``log mu(T)``.
    In decentralized mode restarts are counted per cascade after synchronisation.
    """
    factors = np.arange(0.6, 1.401, 0.05) if factors is None else np.asarray(factors, dtype=float)
    hz = horizon(cfg)
    h = step or hz["step"]
    prob = build_problem(cfg)
    cert = certificate_for(prob)
    x0 = initial_state(cfg, prob, "centralized")
    rows = []
    for f in factors:
        T = float(f * cert.T_star)
        if not cert.contains(T):
            continue
        pr = prob.replace_params(T=T)
        prm = pr.params
        period = (T - prm.T0) / (prm.k_a * prm.omega)
        arc, lay = simulate(pr, mode, t_max=jumps * period, step=h, x0=x0, record_every=hz["record_every"])
        t_from = 0.0
        if mode == "decentralized":
            t_from = sync_check(arc, prm.T0, T, lay).t_star
        slope, js, _ = restart_contraction_fit(arc, lay, pr.theta_star, prm.T0, first=2, t_from=t_from,
                                               floor=1e-26)
        if sink is not None:
            arc.diagnostics = {"theta_error": theta_error_norm(arc, lay, pr.theta_star)}
            sink(f"factor{f:.2f}", arc)
        rows.append({"factor": float(f), "T": T, "slope": slope, "log_mu": math.log(cert.mu(T)),
                     "per_time": slope / period, "n_fit": int(js.size)})
    best = min(rows, key=lambda r: r["per_time"]) if rows else None
    return {"T_star": cert.T_star, "T_lower": cert.T_lower, "T_upper": cert.T_upper,
            "rows": rows, "best": best}


def example1_study(cfg: dict, T_values=None, step: float | None = None, sink=None) -> dict:
    """Unrestarted momentum flow versus centralized restarts at several ``T``."""
    sink = sink or (lambda name, arc: None)
    c = copy.deepcopy(cfg)
    c.setdefault("restart", {})["mode"] = "none"
    base = run_estimation(c, step=step)
    sink("no_restart", base.arc)
    T_values = T_values or (cfg.get("reproduce") or {}).get("restarted_T") or [cfg["params"]["T"]]
    rows = []
    for T in T_values:
        c = copy.deepcopy(cfg)
        c["restart"] = {**(cfg.get("restart") or {}), "mode": "centralized"}
        c["params"] = {**cfg["params"], "T": float(T)}
        r = run_estimation(c, step=step)
        sink(f"T{float(T):g}", r.arc)
        rows.append({"T": float(T), "final": r.summary["theta_error_final"],
                     "t_1e-6": first_crossing(r.arc.t, r.extra["theta_error"], 1e-6),
                     "jumps": r.summary["jumps"], "in_window": r.summary["certificate"]["T_in_window"]})
    return {"no_restart": {k: base.summary[k] for k in ("theta_error_initial", "theta_error_max",
                                                         "growth_factor", "diverged")},
            "certificate": base.summary["certificate"], "restarted": rows}


def reproduce(name: str, cfg: dict | None = None, step: float | None = None,
              out_dir=None) -> dict:
    """Run the study attached to a preset and return a JSON-ready summary.

    With ``out_dir`` every simulated arc is written as ``<preset>_<run>.csv``.
    """
    cfg = load_config(name) if cfg is None else cfg
    extra = cfg.get("reproduce") or {}
    sink = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        def sink(run_name, arc):
            arc.to_csv(out / f"{name}_{run_name}.csv")
    if name == "example1":
        return example1_study(cfg, step=step, sink=sink)
    if name == "estimation":
        return estimation_study(cfg, extra.get("fractions", (0.2, 0.4, 0.6, 0.95)), step=step, sink=sink)
    if name == "rate":
        return rate_sweep(cfg, extra.get("factors"), float(extra.get("periods", 10.5)), step=step, sink=sink)
    runs = {}
    modes = ("decentralized", "centralized") if name in ("mrac", "feedopt") else (restart_mode(cfg),)
    for mode in modes:
        c = copy.deepcopy(cfg)
        c["restart"] = {**(cfg.get("restart") or {}), "mode": mode}
        res = run(c, step=step)
        if sink is not None:
            sink(mode, res.arc)
        runs[mode] = res.summary
    return runs


__all__ = [
    "ConfigError", "PRESETS", "RunResult", "apply_overrides", "build_disturbance", "build_feedopt",
    "build_graph", "build_mrac", "build_params", "build_problem", "certificate_for",
    "disturbance_family", "estimation_study", "example1_study", "horizon", "initial_state",
    "load_config", "preset_path", "problem_for", "rate_sweep", "reproduce", "restart_mode", "run",
    "run_estimation", "run_feedopt", "run_mrac", "sample_times", "set_option",
]
