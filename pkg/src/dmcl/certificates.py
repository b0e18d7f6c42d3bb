"""Executable versions of the Lyapunov inequalities behind the restart window.

The error coordinates are ``theta~ = theta - 1 (x) theta*`` and
``p~ = p - 1 (x) theta*``. With ``Q = diag(q) (x) I_n`` the Lyapunov function is

    V = |p~ - theta~|_Q^2 / 4 + |p~|_Q^2 / 4 + tau^2 |theta~|_Sigma^2 / 2.

Every check returns a small result object with the observed worst margin and
a ``passed`` flag, so that suites can be aggregated into a JSON report.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from dmcl.core import DMCLProblem, Layout, disturbance_input, error_matrices
from dmcl.dataset import disturbance_vector, input_gain_constant
from dmcl.graphs import SpectralCertificate, block_diag
from dmcl.hybrid import HybridArc

# ---------------------------------------------------------------------------
# Lyapunov function and its sandwich


def q_matrix(q, n: int) -> np.ndarray:
    """``diag(q) (x) I_n``."""
    return np.kron(np.diag(np.asarray(q, dtype=float)), np.eye(n))


def lyapunov_value(theta_err, p_err, tau, Sigma, Q) -> float:
    """Evaluate ``V`` at one error state; ``Q`` is the full weight matrix."""
    th = np.asarray(theta_err, dtype=float).ravel()
    p = np.asarray(p_err, dtype=float).ravel()
    z = p - th
    return float(0.25 * z @ Q @ z + 0.25 * p @ Q @ p + 0.5 * tau**2 * th @ Sigma @ th)


def lyapunov_along(arc: HybridArc, layout: Layout, theta_star, cert: SpectralCertificate) -> np.ndarray:
    """``V`` at every sample of a centralized arc (single timer)."""
    Q = q_matrix(cert.q, layout.n)
    star = np.tile(np.asarray(theta_star, dtype=float), layout.N)
    th = arc.x[:, layout.theta] - star
    p = arc.x[:, layout.p] - star
    tau = arc.x[:, layout.tau][:, 0]
    z = p - th
    return (0.25 * np.einsum("ki,ij,kj->k", z, Q, z) + 0.25 * np.einsum("ki,ij,kj->k", p, Q, p)
            + 0.5 * tau**2 * np.einsum("ki,ij,kj->k", th, cert.Sigma, th))


def sandwich_constants(cert: SpectralCertificate, T0: float, T: float, k_r: float | None = None,
                       k_c: float | None = None) -> tuple[float, float]:
    """Constants with ``c_lower |x~|^2 <= V <= c_upper |x~|^2`` on ``tau in [T0, T]``."""
    k_r = cert.k_r if k_r is None else k_r
    k_c = cert.k_c if k_c is None else k_c
    c_lower = 0.25 * min(cert.sigma_q_min, 2.0 * cert.sigma_sigma_min * T0**2)
    c_upper = 0.25 * max(3.0 * cert.sigma_q_max,
                         T**2 * (2.0 * k_r * cert.sigma_q_max * cert.sigma_delta_max + k_c * cert.lambdaN)
                         + 2.0 * cert.sigma_q_max)
    return c_lower, c_upper


@dataclass
class CheckResult:
    """Outcome of one inequality check."""

    name: str
    passed: bool
    worst_margin: float
    trials: int
    applicable: bool = True
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_margin"] = _finite_or_str(self.worst_margin)
        d["detail"] = {k: _finite_or_str(v) for k, v in self.detail.items()}
        return d


def _finite_or_str(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def sandwich_check(cert: SpectralCertificate, T0: float, T: float, trials: int = 100,
                   rng: np.random.Generator | None = None) -> CheckResult:
    """Sample random error states and timers and test both sandwich inequalities."""
    rng = np.random.default_rng(0) if rng is None else rng
    c_lo, c_hi = sandwich_constants(cert, T0, T)
    Q = q_matrix(cert.q, cert.n_params)
    d = cert.n_agents * cert.n_params
    worst = -math.inf
    for _ in range(trials):
        scale = 10.0 ** rng.uniform(-3, 3)
        th, p = scale * rng.standard_normal(d), scale * rng.standard_normal(d)
        tau = rng.uniform(T0, T)
        V = lyapunov_value(th, p, tau, cert.Sigma, Q)
        x2 = th @ th + p @ p
        worst = max(worst, (c_lo * x2 - V) / x2, (V - c_hi * x2) / x2)
    return CheckResult("sandwich", bool(worst <= 1e-12), worst, trials,
                       detail={"c_lower": c_lo, "c_upper": c_hi})


# ---------------------------------------------------------------------------
# flow inequality


def nu_constant(cert: SpectralCertificate, T: float, omega: float | None = None) -> float:
    """Uniform lower bound on the spectrum of ``V_w`` for ``tau <= T``."""
    omega = cert.omega if omega is None else omega
    num = (1.0 - omega) * cert.sigma_sigma_min * cert.sigma_q_min - T**2 * (
        cert.sigma_omega**2 + cert.chi_kt**2)
    den = T**2 * (1.0 - omega) * cert.sigma_sigma_min + cert.sigma_q_min
    return num / den


def vw_matrix(cert: SpectralCertificate, tau: float, w: float, A_s: np.ndarray | None = None,
              k_t: float = 0.0) -> np.ndarray:
    """Block matrix ``[[Q / tau^2, Omega^], [Omega^T, (1 - w) Sigma + k_t Q A(s)]]``."""
    Q = q_matrix(cert.q, cert.n_params)
    d = Q.shape[0]
    QA = np.zeros((d, d)) if A_s is None or not k_t else k_t * Q @ A_s
    Om = cert.Omega + QA
    return np.block([[Q / tau**2, Om], [Om.T, (1.0 - w) * cert.Sigma + QA]])


def vw_margin(cert: SpectralCertificate, T: float, tau_grid, time_grid,
              problem: DMCLProblem | None = None, omega: float | None = None,
              tol: float = 1e-9) -> CheckResult:
    """Smallest ``lambda_min(V_w(tau, s)) - nu`` over a ``(tau, s)`` grid.

    ``problem`` supplies the real-time regressors when ``k_t > 0``. The check
    is reported inapplicable when ``nu <= 0`` (``T`` at or beyond the upper end
    of the window).
    """
    omega = cert.omega if omega is None else omega
    nu = nu_constant(cert, T, omega)
    k_t = problem.params.k_t if problem is not None else 0.0
    worst = math.inf
    count = 0
    for s in time_grid:
        A_s = error_matrices(problem, float(s))[0] if (problem is not None and k_t) else None
        for tau in tau_grid:
            lam = float(np.linalg.eigvalsh(vw_matrix(cert, float(tau), omega, A_s, k_t))[0])
            worst = min(worst, lam - nu)
            count += 1
    applicable = nu > 0
    return CheckResult("vw_margin", bool(applicable and worst >= -tol), worst, count, applicable,
                       detail={"nu": nu, "T": T, "omega": omega})


def flow_constants(cert: SpectralCertificate, params, phi_bar: float, epsilon: float = 1.0):
    """``(rho, gamma)`` of the flow inequality ``V' <= -rho V + gamma |u|^2``."""
    nu = nu_constant(cert, params.T, params.omega)
    _, c_hi = sandwich_constants(cert, params.T0, params.T, params.k_r, params.k_c)
    rho = nu * params.T0 / (3.0 * c_hi) * epsilon / (1.0 + epsilon)
    gamma = (1.0 + epsilon) * 6.0 / (nu * params.T0) * (cert.sigma_q_max * phi_bar * params.T) ** 2
    return params.k_a * rho, params.k_a * gamma, nu


def phi_bar_of(problem: DMCLProblem) -> float:
    """Gain with ``|U| <= 2 tau phi_bar |u|`` for the problem's data and regressors."""
    regs = problem.regressors or []
    sup_phi = max((r.sup_bound for r in regs), default=0.0)
    return input_gain_constant(problem.datasets, sup_phi, problem.params.k_t, problem.params.k_r)


def _v_state(x, layout: Layout, theta_star, cert) -> float:
    star = np.tile(np.asarray(theta_star, dtype=float), layout.N)
    return lyapunov_value(x[layout.theta] - star, x[layout.p] - star, float(x[layout.tau][0]),
                          cert.Sigma, q_matrix(cert.q, layout.n))


def lyapunov_rate(x: np.ndarray, dx: np.ndarray, layout: Layout, theta_star, cert) -> float:
    """Chain rule ``dV = grad V(x) . dx`` for a centralized state."""
    Q = q_matrix(cert.q, layout.n)
    star = np.tile(np.asarray(theta_star, dtype=float), layout.N)
    th = x[layout.theta] - star
    p = x[layout.p] - star
    tau = float(x[layout.tau][0])
    dth, dp, dtau = dx[layout.theta], dx[layout.p], float(dx[layout.tau][0])
    z, dz = p - th, dp - dth
    return float(0.5 * z @ Q @ dz + 0.5 * p @ Q @ dp
                 + tau * dtau * th @ cert.Sigma @ th + tau**2 * th @ cert.Sigma @ dth)


def flow_decrease_check(arc: HybridArc, layout: Layout, problem: DMCLProblem,
                        cert: SpectralCertificate, epsilon: float = 1.0, kernel=None,
                        fd_check: bool = True) -> CheckResult:
    """Test ``V' <= -rho V + gamma |u|^2`` at every flow sample of a centralized arc.

    ``V'`` comes from the chain rule with the analytic flow field; central
    differences on interior samples of each flow interval give a cross-check
    (reported as ``fd_rel_err``).
    """
    kern = kernel or problem.kernel(1)
    rho, gamma, nu = flow_constants(cert, problem.params, phi_bar_of(problem), epsilon)
    if nu <= 0:
        return CheckResult("flow_decrease", False, math.inf, 0, False, {"nu": nu})
    V = lyapunov_along(arc, layout, problem.theta_star, cert)
    k_bars = [len(ds) for ds in problem.datasets]
    worst = -math.inf
    fd_err = 0.0
    count = 0
    dV = np.empty(len(arc))
    for k in range(len(arc)):
        x = arc.x[k]
        dV[k] = lyapunov_rate(x, kern.rhs(arc.t[k], x), layout, problem.theta_star, cert)
        u = disturbance_vector(problem.disturbance, float(x[layout.s]), k_bars)
        tol = 1e-6 * max(1.0, V[k])
        worst = max(worst, dV[k] + rho * V[k] - gamma * float(u @ u) - tol)
        count += 1
    if fd_check:
        # Central differences of V along the flow through each sampled state,
        # using one tiny RK4 step forwards and one backwards.
        picks = np.unique(np.linspace(0, len(arc) - 1, min(len(arc), 200)).astype(int))
        for k in picks:
            x, t = arc.x[k], float(arc.t[k])
            h = 1e-6 * max(1.0, float(x[layout.tau][0]))
            xp = kern.integrate(t, x, h, 1)[1][-1]
            xm = kern.integrate(t, x, -h, 1)[1][-1]
            fd = (_v_state(xp, layout, problem.theta_star, cert)
                  - _v_state(xm, layout, problem.theta_star, cert)) / (2.0 * h)
            scale = max(abs(dV[k]), 1e-9 * max(1.0, V[k]))
            fd_err = max(fd_err, abs(fd - dV[k]) / scale)
    detail = {"rho": rho, "gamma": gamma, "nu": nu, "epsilon": epsilon, "fd_rel_err": fd_err}
    return CheckResult("flow_decrease", bool(worst <= 0.0), worst, count, True, detail)


# ---------------------------------------------------------------------------
# jumps


def jump_decrease_check(theta_err, p_err, cert: SpectralCertificate, eta, T: float,
                        T0: float) -> CheckResult:
    """Apply the restart map to one error state at ``tau = T`` and report ``V+/V``."""
    n = cert.n_params
    Q = q_matrix(cert.q, n)
    th = np.asarray(theta_err, dtype=float).ravel()
    p = np.asarray(p_err, dtype=float).ravel()
    eta = np.asarray(eta, dtype=int)
    R = np.repeat(eta, n).astype(bool)
    p_plus = np.where(R, th, p)
    V = lyapunov_value(th, p, T, cert.Sigma, Q)
    V_plus = lyapunov_value(th, p_plus, T0, cert.Sigma, Q)
    ratio = 0.0 if V == 0.0 else V_plus / V
    mu_T = (cert.T_lower / T) ** 2
    bound = mu_T if eta.min() == 1 else 1.0
    return CheckResult("jump_decrease", bool(ratio <= bound + 1e-9), ratio - bound, 1,
                       detail={"ratio": ratio, "bound": bound, "mu_T": mu_T})


def jump_contraction_trials(cert: SpectralCertificate, T: float, T0: float, trials: int = 100,
                            eta=None, rng: np.random.Generator | None = None) -> CheckResult:
    """Random states on the jump set; ``eta=None`` draws an arbitrary policy per trial."""
    rng = np.random.default_rng(1) if rng is None else rng
    d = cert.n_agents * cert.n_params
    worst = -math.inf
    ratios = []
    for _ in range(trials):
        e = rng.integers(0, 2, cert.n_agents) if eta is None else np.asarray(eta)
        res = jump_decrease_check(rng.standard_normal(d), rng.standard_normal(d), cert, e, T, T0)
        worst = max(worst, res.worst_margin)
        ratios.append(res.detail["ratio"])
    name = "jump_contraction" if eta is not None and np.min(eta) == 1 else "jump_monotone"
    return CheckResult(name, bool(worst <= 1e-9), worst, trials,
                       detail={"max_ratio": max(ratios), "mu_T": (cert.T_lower / T) ** 2})


def reset_identity_residual(theta_err, p_err, q, eta) -> float:
    """Both sides of the restart identity, written out term by term; returns ``|LHS - RHS|``."""
    th = np.asarray(theta_err, dtype=float).ravel()
    p = np.asarray(p_err, dtype=float).ravel()
    q = np.asarray(q, dtype=float)
    n = th.size // q.size
    Q = q_matrix(q, n)
    R = np.kron(np.diag(np.asarray(eta, dtype=float)), np.eye(n))
    I = np.eye(th.size)

    def nrm(v, W):
        return float(v @ W @ v)

    mixed = R @ th + (I - R) @ p
    lhs = nrm(mixed - th, Q) + nrm(mixed, Q) - nrm(p, Q) - nrm(p - th, Q)
    RQ = R @ Q
    rhs = nrm(th, RQ) - nrm(p, RQ) - nrm(th - p, RQ)
    return abs(lhs - rhs)


def block_triangular_sv_bound(A, B, D) -> tuple[float, float]:
    """``(sigma_min([[A, B], [0, D]]), lower bound)`` for invertible ``A, D``."""
    A, B, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, D))
    try:
        Ai = np.linalg.inv(A)
        Di = np.linalg.inv(D)
    except np.linalg.LinAlgError as exc:
        raise ValueError("A and D must be invertible") from exc
    M = np.block([[A, B], [np.zeros((D.shape[0], A.shape[1])), D]])
    smin = float(np.linalg.svd(M, compute_uv=False)[-1])
    nA, nD = np.linalg.norm(Ai, 2), np.linalg.norm(Di, 2)
    nBD = np.linalg.norm(B @ Di, 2)
    bound = 1.0 / math.sqrt(nA**2 * (1.0 + nBD**2) + nD**2)
    return smin, float(bound)


def decomposition_residual(problem: DMCLProblem, cert: SpectralCertificate, theta) -> float:
    """Entrywise gap in ``k_r Delta theta~ + k_c L theta = Q^{-1}(Sigma + Omega) theta~``.

    Relative to ``max(1, max |lhs|)`` since data matrices can have large entries.
    """
    prm = problem.params
    theta = np.asarray(theta, dtype=float).ravel()
    err = theta - np.tile(problem.theta_star, problem.N)
    Delta = block_diag(problem.data_matrices)
    Lb = np.kron(problem.laplacian, np.eye(problem.n))
    lhs = prm.k_r * Delta @ err + prm.k_c * Lb @ theta
    Qinv = q_matrix(1.0 / cert.q, problem.n)
    rhs = Qinv @ (cert.Sigma + cert.Omega) @ err
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(lhs)))))


# ---------------------------------------------------------------------------
# ISS profile


@dataclass
class ISSProfile:
    amplitudes: np.ndarray
    errors: np.ndarray
    diverged: bool
    monotone: bool
    zero_error: float
    gains: np.ndarray
    gain_spread: float

    def to_dict(self) -> dict:
        return {"amplitudes": self.amplitudes.tolist(), "errors": self.errors.tolist(),
                "diverged": self.diverged, "monotone": self.monotone,
                "zero_error": self.zero_error, "gains": self.gains.tolist(),
                "gain_spread": self.gain_spread}


def iss_profile(problem: DMCLProblem, disturbance_of, amplitudes, t_max: float,
                step: float = 1e-3, tail: float = 0.2, mode: str = "centralized",
                record_every: int = 10) -> ISSProfile:
    """Asymptotic ``sup |theta~|`` over the last ``tail`` of the horizon per amplitude.

    ``disturbance_of(a)`` returns the disturbance for amplitude ``a``; recorded
    noise is re-applied to the datasets so that ``psi`` includes it.
    """
    from dataclasses import replace

    from dmcl.core import simulate, theta_error_norm
    from dmcl.dataset import with_recorded_noise
    from dmcl.hybrid import HybridError

    amps = np.asarray(amplitudes, dtype=float)
    errs = np.empty(amps.size)
    diverged = False
    for k, a in enumerate(amps):
        dist = disturbance_of(float(a))
        prob = replace(problem, datasets=with_recorded_noise(problem.datasets, problem.theta_star, dist),
                       disturbance=dist)
        try:
            arc, lay = simulate(prob, mode, t_max=t_max, step=step, record_every=record_every)
        except HybridError:
            errs[k] = math.inf
            diverged = True
            continue
        e = theta_error_norm(arc, lay, problem.theta_star)
        errs[k] = float(e[arc.t >= (1.0 - tail) * t_max].max())
    monotone = bool(np.all(np.diff(errs) >= -1e-12))
    zero = float(errs[amps == 0].max()) if np.any(amps == 0) else math.nan
    pos = amps > 0
    gains = errs[pos] / amps[pos]
    spread = float(gains.max() / gains.min() - 1.0) if gains.size and gains.min() > 0 else math.inf
    return ISSProfile(amps, errs, diverged, monotone, zero, gains, spread)


# ---------------------------------------------------------------------------
# reports


@dataclass
class VerificationReport:
    suite: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "failed": self.failed,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)


def algebraic_suite(trials: int = 1000, seed: int = 0, problem: DMCLProblem | None = None,
                    cert: SpectralCertificate | None = None) -> list[CheckResult]:
    """Restart identity, block-triangular bound and (if given) the decomposition identity."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        N, n = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        q = rng.uniform(0.05, 1.0, N)
        q /= np.linalg.norm(q)
        worst = max(worst, reset_identity_residual(rng.standard_normal(N * n), rng.standard_normal(N * n),
                                                   q, rng.integers(0, 2, N)))
    out = [CheckResult("reset_identity", worst <= 1e-10, worst, trials)]
    gap = math.inf
    n_sv = max(50, trials // 20)
    for _ in range(n_sv):
        a, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        A = rng.standard_normal((a, a)) + 3 * np.eye(a)
        D = rng.standard_normal((d, d)) + 3 * np.eye(d)
        B = rng.standard_normal((a, d))
        smin, bound = block_triangular_sv_bound(A, B, D)
        gap = min(gap, smin - bound)
    out.append(CheckResult("block_triangular_bound", gap >= -1e-12, gap, n_sv))
    if problem is not None and cert is not None:
        res = max(decomposition_residual(problem, cert, rng.standard_normal(problem.N * problem.n))
                  for _ in range(100))
        out.append(CheckResult("decomposition_identity", res <= 1e-9, res, 100))
    return out


def spectral_suite(problem: DMCLProblem, cert: SpectralCertificate, tol: float = 1e-9) -> list[CheckResult]:
    """Consistency of the certificate with the Laplacian and data."""
    L = problem.laplacian
    q = cert.q
    out = [CheckResult("perron_left_null", bool(np.linalg.norm(q @ L) <= 1e-10), float(np.linalg.norm(q @ L)), 1),
           CheckResult("perron_positive", bool(q.min() > 0 and abs(np.linalg.norm(q) - 1) <= 1e-12),
                       float(-q.min()), 1)]
    Qs = np.diag(q)
    lam = float(np.linalg.eigvalsh(Qs @ L + L.T @ Qs)[0])
    out.append(CheckResult("ql_psd", lam >= -1e-10, -lam, 1))
    out.append(CheckResult("csr", cert.alpha > 0, -cert.alpha, 1, detail={"alpha": cert.alpha}))
    gap_hi = cert.sigma_sigma_max - cert.sigma_sigma_max_bound
    out.append(CheckResult("sigma_max_bound", gap_hi <= tol, gap_hi, 1))
    gap_lo = cert.sigma_sigma_min_analytic - cert.sigma_sigma_min
    out.append(CheckResult("sigma_min_analytic", gap_lo <= tol, gap_lo, 1,
                           detail={"printed_variant_gap": cert.sigma_sigma_min_analytic_printed
                                   - cert.sigma_sigma_min}))
    return out


def lyapunov_suite(problem: DMCLProblem, cert: SpectralCertificate, arc: HybridArc | None = None,
                   layout: Layout | None = None, grid: int = 10, trials: int = 100,
                   seed: int = 0) -> list[CheckResult]:
    """Sandwich, jump decrease, ``V_w`` margin and (given an arc) the flow inequality."""
    prm = problem.params
    rng = np.random.default_rng(seed)
    out = [sandwich_check(cert, prm.T0, prm.T, trials, rng)]
    if prm.T > cert.T_lower:
        out.append(jump_contraction_trials(cert, prm.T, prm.T0, trials, np.ones(problem.N, dtype=int), rng))
    else:
        out.append(CheckResult("jump_contraction", False, math.inf, 0, False, {"reason": "T <= T_lower"}))
    out.append(jump_contraction_trials(cert, prm.T, prm.T0, trials, None, rng))
    taus = np.linspace(prm.T0, prm.T, grid)
    times = np.linspace(0.0, 10.0, grid)
    out.append(vw_margin(cert, prm.T, taus, times, problem, prm.omega))
    if arc is not None and layout is not None:
        out.append(flow_decrease_check(arc, layout, problem, cert))
    return out


def iss_suite(problem: DMCLProblem, cert: SpectralCertificate, disturbance_of, amplitude: float,
              t_max: float, step: float = 1e-3, mode: str = "centralized", zero_tol: float = 1e-6,
              gain_tol: float = 0.2, record_every: int = 10) -> list[CheckResult]:
    """Amplitude sweep ``{0, a, 2a, 10a}`` plus the flow inequality on the ``a`` arc."""
    from dataclasses import replace

    from dmcl.core import simulate
    from dmcl.dataset import with_recorded_noise

    amps = np.array([0.0, 1.0, 2.0, 10.0]) * amplitude
    prof = iss_profile(problem, disturbance_of, amps, t_max, step, mode=mode, record_every=record_every)
    out = [CheckResult("iss_monotone", prof.monotone and not prof.diverged, float(-np.min(np.diff(prof.errors))),
                       amps.size, detail=prof.to_dict()),
           CheckResult("iss_zero_input", prof.zero_error <= zero_tol, prof.zero_error, 1),
           CheckResult("iss_gain_stable", prof.gain_spread <= gain_tol, prof.gain_spread, int(prof.gains.size))]
    dist = disturbance_of(float(amplitude))
    prob = replace(problem, datasets=with_recorded_noise(problem.datasets, problem.theta_star, dist),
                   disturbance=dist)
    arc, lay = simulate(prob, mode, t_max=min(t_max, 4.0 * problem.params.T), step=step,
                        record_every=record_every)
    out.append(flow_decrease_check(arc, lay, prob, cert))
    return out


def run_checks(suite: str, checks: list[CheckResult]) -> VerificationReport:
    return VerificationReport(suite, checks)


__all__ = [
    "CheckResult", "ISSProfile", "VerificationReport", "algebraic_suite", "block_triangular_sv_bound",
    "decomposition_residual", "flow_constants", "flow_decrease_check", "iss_profile", "iss_suite",
    "jump_contraction_trials", "jump_decrease_check", "lyapunov_along", "lyapunov_rate",
    "lyapunov_suite", "lyapunov_value", "nu_constant", "phi_bar_of", "q_matrix",
    "reset_identity_residual", "run_checks", "sandwich_check", "sandwich_constants",
    "spectral_suite", "vw_margin", "vw_matrix",
]
