"""Momentum-based cooperative concurrent learning with coordinated restarts.

Two hybrid systems are provided:

* a centralized one with a single shared timer ``tau_c`` (state
  ``[theta, p, tau_c, s]``), restarting every agent at once;
* a decentralized one with one timer per agent (state ``[theta, p, tau_1..tau_N, s]``)
  where an agent restarts when its own timer hits ``T`` and pulls or pushes the
  timers of its out-neighbours through a threshold rule.

All flows use the convention ``(L theta)_i = sum_j a_ij (theta_i - theta_j)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from dmcl.dataset import AgentDataset, Disturbance, Regressor, assemble_U, zero_disturbance
from dmcl.graphs import Digraph, GraphError, build_laplacian, is_strongly_connected
from dmcl.hybrid import GuardClock, HybridArc, HybridSystemSpec, solve
from dmcl.kernels import FlowKernel

TIMER_TOL = 1e-9

RESTART_MODES = ("centralized", "decentralized", "none")


@dataclass(frozen=True)
class DMCLParams:
    """Gains and restart parameters.

    Parameters
    ----------
    k_r, k_t, k_c
        Recorded-data, real-time and consensus gains.
    T0, T
        Timer reset value and restart threshold, ``0 < T0 < T``.
    omega
        Timer rate in ``(0, 1)``.
    eta
        Restart policy per agent (1 restores ``p_i = theta_i``); ``None`` means all ones.
    r
        Coordination thresholds for the decentralized rule; ``None`` picks the
        midpoint of the admissible interval.
    k_a
        Time-scale gain multiplying the whole estimator flow.
    tie_rule
        Value returned by the coordination rule when ``tau_j == r_j``.
    """

    k_r: float
    k_c: float
    T0: float
    T: float
    omega: float = 0.5
    k_t: float = 0.0
    eta: tuple | None = None
    r: tuple | None = None
    k_a: float = 1.0
    tie_rule: str = "T0"

    def __post_init__(self):
        if not self.k_r > 0:
            raise ValueError("k_r must be positive")
        if self.k_t < 0:
            raise ValueError("k_t must be nonnegative")
        if self.k_c < 0:
            raise ValueError("k_c must be nonnegative")
        if not 0 < self.T0 < self.T:
            raise ValueError(f"need 0 < T0 < T, got T0={self.T0}, T={self.T}")
        if not 0 < self.omega < 1:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")
        if not self.k_a > 0:
            raise ValueError("k_a must be positive")
        if self.tie_rule not in ("T0", "T"):
            raise ValueError("tie_rule must be 'T0' or 'T'")

    def eta_vector(self, N: int) -> np.ndarray:
        if self.eta is None:
            return np.ones(N, dtype=int)
        eta = np.asarray(self.eta, dtype=int)
        if eta.shape != (N,) or np.any((eta != 0) & (eta != 1)):
            raise ValueError(f"eta must be a 0/1 vector of length {N}")
        return eta

    def r_bounds(self, N: int) -> tuple[float, float]:
        return self.T0, self.T0 + (self.T - self.T0) / (N - 1)

    def r_vector(self, N: int) -> np.ndarray:
        lo, hi = self.r_bounds(N)
        if self.r is None:
            return np.full(N, 0.5 * (lo + hi))
        r = np.broadcast_to(np.asarray(self.r, dtype=float), (N,)).copy()
        return r

    def validate_r(self, N: int) -> None:
        lo, hi = self.r_bounds(N)
        r = self.r_vector(N)
        if np.any(r <= lo) or np.any(r >= hi):
            raise ValueError(f"coordination thresholds must lie in ({lo}, {hi}), got {r}")


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for stacked states ``[theta, p, tau, s, extra]``."""

    N: int
    n: int
    nt: int
    extra: int = 0

    @property
    def Nn(self) -> int:
        return self.N * self.n

    @property
    def theta(self) -> slice:
        return slice(0, self.Nn)

    @property
    def p(self) -> slice:
        return slice(self.Nn, 2 * self.Nn)

    @property
    def tau(self) -> slice:
        return slice(2 * self.Nn, 2 * self.Nn + self.nt)

    @property
    def s(self) -> int:
        return 2 * self.Nn + self.nt

    @property
    def plant(self) -> slice:
        return slice(self.s + 1, self.s + 1 + self.extra)

    @property
    def size(self) -> int:
        return 2 * self.Nn + self.nt + 1 + self.extra

    def tau_indices(self) -> tuple[int, ...]:
        return tuple(range(2 * self.Nn, 2 * self.Nn + self.nt))

    def labels(self, extra_labels: Sequence[str] = ()) -> list[str]:
        out = [f"theta_{i}_{m}" for i in range(self.N) for m in range(self.n)]
        out += [f"p_{i}_{m}" for i in range(self.N) for m in range(self.n)]
        out += ["tau"] if self.nt == 1 else [f"tau_{i}" for i in range(self.N)]
        out += ["s"]
        extra = list(extra_labels) or [f"plant_{k}" for k in range(self.extra)]
        return out + extra


@dataclass
class NetworkState:
    """Estimates, momenta, timers and the time state of all agents."""

    theta: np.ndarray
    p: np.ndarray
    tau: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float)).reshape(self.theta.shape)
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.s = float(self.s)

    @property
    def N(self) -> int:
        return self.theta.shape[0]

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    @property
    def layout(self) -> Layout:
        return Layout(self.N, self.n, self.tau.size)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta.ravel(), self.p.ravel(), self.tau, [self.s]])

    @classmethod
    def from_vector(cls, x, layout: Layout) -> "NetworkState":
        x = np.asarray(x, dtype=float)
        return cls(x[layout.theta].reshape(layout.N, layout.n),
                   x[layout.p].reshape(layout.N, layout.n),
                   x[layout.tau].copy(), float(x[layout.s]))

    def theta_error(self, theta_star) -> np.ndarray:
        return (self.theta - np.asarray(theta_star)[None, :]).ravel()

    def p_error(self, theta_star) -> np.ndarray:
        return (self.p - np.asarray(theta_star)[None, :]).ravel()

    def copy(self) -> "NetworkState":
        return NetworkState(self.theta.copy(), self.p.copy(), self.tau.copy(), self.s)


# ---------------------------------------------------------------------------
# maps


def lambda_map(theta_i, s, dataset: AgentDataset, regressor: Regressor | None, k_t, k_r,
               upsilon: float = 0.0, theta_star=None) -> np.ndarray:
    """Learning gradient ``k_t Psi_i + k_r Phi_i`` of one agent.

    ``Psi_i`` uses the real-time measurement ``phi_i(s)^T theta* + upsilon``;
    ``Phi_i`` uses the recorded measurements stored in ``dataset``.
    """
    theta_i = np.asarray(theta_i, dtype=float)
    out = np.zeros_like(theta_i)
    if k_t:
        if regressor is None or theta_star is None:
            raise ValueError("real-time term needs a regressor and theta_star")
        phi = regressor(s)
        psi = phi @ np.asarray(theta_star, dtype=float) + upsilon
        out += k_t * phi * (phi @ theta_i - psi)
    if len(dataset):
        P = dataset.phi_matrix
        out += k_r * P.T @ (P @ theta_i - dataset.psi_vector)
    return out


def coordination_reset(tau_j: float, r_j: float, T0: float, T: float, tie_rule: str = "T0") -> float:
    """Timer update of a neighbour when an agent restarts."""
    if tau_j < r_j:
        return T0
    if tau_j > r_j:
        return T
    return T0 if tie_rule == "T0" else T


def mu(T: float, cert) -> float:
    """Per-restart contraction factor ``(T_lower / T)^2``.

    ``cert`` is a certificate with a populated ``T_lower`` or the value itself.
    """
    T_lower = float(getattr(cert, "T_lower", cert))
    if not T > T_lower:
        raise ValueError(f"T={T} must exceed T_lower={T_lower} for a contraction")
    return (T_lower / T) ** 2


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class DMCLProblem:
    """A cooperative estimation instance: graph, data, true parameter and gains."""

    graph: Digraph
    datasets: list[AgentDataset]
    theta_star: np.ndarray
    params: DMCLParams
    regressors: list[Regressor] | None = None
    disturbance: Disturbance | None = None
    recorded_coef_for_U: float | None = None

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if len(self.datasets) != self.graph.n_nodes:
            raise ValueError("one dataset per agent is required")
        if any(ds.n != self.theta_star.size for ds in self.datasets):
            raise ValueError("dataset dimension does not match theta_star")
        if self.disturbance is None:
            self.disturbance = zero_disturbance(self.N)
        if self.params.k_t and self.regressors is None:
            raise ValueError("k_t > 0 requires time-varying regressors")

    @property
    def N(self) -> int:
        return self.graph.n_nodes

    @property
    def n(self) -> int:
        return self.theta_star.size

    @property
    def laplacian(self) -> np.ndarray:
        return build_laplacian(self.graph).matrix

    @property
    def data_matrices(self) -> list[np.ndarray]:
        return [ds.data_matrix for ds in self.datasets]

    def data_vectors(self) -> np.ndarray:
        return np.array([ds.data_vector if len(ds) else np.zeros(self.n) for ds in self.datasets])

    def regressor_family(self) -> tuple[np.ndarray, np.ndarray]:
        """Exponential-family coefficients for the compiled real-time term."""
        if not self.params.k_t:
            return np.zeros((self.N, self.n)), np.zeros((self.N, self.n))
        regs = self.regressors
        if any(r.coef is None for r in regs):
            raise ValueError("compiled kernels need exponential-family regressors for k_t > 0")
        return np.array([r.coef for r in regs]), np.array([r.rate for r in regs])

    def kernel_args(self, nt: int, extra_fpar: Sequence[float] = ()) -> tuple:
        prm = self.params
        dist = self.disturbance
        coef, rate = self.regressor_family()
        phase = np.asarray(dist.phase, dtype=float)
        if phase.size != self.N:
            phase = np.zeros(self.N)
        fpar = np.array([prm.k_r, prm.k_t, prm.k_c, prm.omega, prm.k_a, dist.amplitude, dist.freq,
                         *extra_fpar], dtype=float)
        return (self.N, self.n, nt, self.graph.adjacency, np.array(self.data_matrices),
                self.data_vectors(), coef, rate, self.theta_star, phase, fpar)

    def kernel(self, nt: int, backend: str | None = None) -> FlowKernel:
        return FlowKernel("dmcl", self.kernel_args(nt), backend)

    def replace_params(self, **changes) -> "DMCLProblem":
        return replace(self, params=replace(self.params, **changes))

    def initial_state(self, theta0=None, p0=None, tau0=None, nt: int = 1) -> NetworkState:
        theta0 = np.zeros((self.N, self.n)) if theta0 is None else np.broadcast_to(
            np.asarray(theta0, dtype=float), (self.N, self.n)).copy()
        p0 = theta0.copy() if p0 is None else np.broadcast_to(
            np.asarray(p0, dtype=float), (self.N, self.n)).copy()
        tau0 = np.full(nt, self.params.T0) if tau0 is None else np.broadcast_to(
            np.asarray(tau0, dtype=float), (nt,)).copy()
        return NetworkState(theta0, p0, tau0, 0.0)


def _check_timers(tau, params: DMCLParams, upper: bool = True) -> None:
    tau = np.atleast_1d(tau)
    if np.any(tau < params.T0 - TIMER_TOL) or (upper and np.any(tau > params.T + TIMER_TOL)):
        raise ValueError(f"timer {tau} outside [{params.T0}, {params.T}]")


def _problem_from(params, graph, datasets, disturbance=None, regressors=None, theta_star=None):
    if theta_star is None:
        # Recorded psi values already encode theta*; only the real-time term needs it.
        theta_star = np.zeros(datasets[0].n)
    return DMCLProblem(graph, list(datasets), theta_star, params, regressors, disturbance)


def centralized_flow(state: NetworkState, params: DMCLParams, graph: Digraph, datasets,
                     disturbance: Disturbance | None = None, regressors=None,
                     theta_star=None) -> NetworkState:
    """Derivative ``(theta', p', tau_c', s')`` of the shared-timer system."""
    _check_timers(state.tau, params)
    if state.tau.size != 1:
        raise ValueError("centralized state has a single timer")
    prob = _problem_from(params, graph, datasets, disturbance, regressors, theta_star)
    dx = prob.kernel(1, backend="numpy").rhs(state.s, state.to_vector())
    return NetworkState.from_vector(dx, state.layout)


def centralized_jump(state: NetworkState, params: DMCLParams) -> NetworkState:
    """Restart: ``p+ = p + R_eta (theta - p)``, ``tau_c+ = T0``."""
    if abs(float(state.tau[0]) - params.T) > TIMER_TOL:
        raise ValueError(f"jump requested off the jump set (tau={state.tau[0]}, T={params.T})")
    eta = params.eta_vector(state.N).astype(bool)
    out = state.copy()
    out.p[eta] = state.theta[eta]
    out.tau[:] = params.T0
    return out


def decentralized_flow(state: NetworkState, params: DMCLParams, graph: Digraph,
                       datasets) -> NetworkState:
    """Per-agent flow with private timers, written as an explicit agent loop."""
    if params.k_t:
        raise ValueError("the decentralized flow assumes k_t = 0")
    _check_timers(state.tau, params)
    N = state.N
    if state.tau.size != N:
        raise ValueError("decentralized state needs one timer per agent")
    A = graph.adjacency
    dtheta = np.zeros_like(state.theta)
    dp = np.zeros_like(state.p)
    for i in range(N):
        tau_i = state.tau[i]
        grad = lambda_map(state.theta[i], state.s, datasets[i], None, 0.0, params.k_r)
        cons = np.zeros(state.n)
        for j in range(N):
            if A[i, j]:
                cons += A[i, j] * (state.theta[i] - state.theta[j])
        dtheta[i] = params.k_a * (2.0 / tau_i) * (state.p[i] - state.theta[i])
        dp[i] = -params.k_a * 2.0 * tau_i * (grad + params.k_c * cons)
    return NetworkState(dtheta, dp, np.full(N, params.k_a * params.omega), 1.0)


def decentralized_jump(state: NetworkState, params: DMCLParams, graph: Digraph,
                       trigger_agent: int) -> NetworkState:
    """Restart of ``trigger_agent`` and the coordination update of its out-neighbours."""
    i = int(trigger_agent)
    if abs(state.tau[i] - params.T) > TIMER_TOL:
        raise ValueError(f"agent {i} is not at the threshold (tau={state.tau[i]})")
    r = params.r_vector(state.N)
    out = state.copy()
    out.p[i] = state.theta[i]
    out.tau[i] = params.T0
    for j in graph.out_neighbors(i):
        out.tau[j] = coordination_reset(state.tau[j], r[j], params.T0, params.T, params.tie_rule)
    return out


# ---------------------------------------------------------------------------
# hybrid systems


def centralized_system(problem: DMCLProblem, mode: str = "centralized",
                       backend: str | None = None, kernel: FlowKernel | None = None,
                       layout: Layout | None = None) -> tuple[HybridSystemSpec, Layout]:
    """Shared-timer hybrid system; ``mode='none'`` disables restarts (timer grows freely).

    ``kernel`` and ``layout`` let plant-coupled models reuse the estimator logic;
    jumps only touch the momentum and timer coordinates.
    """
    if mode not in ("centralized", "none"):
        raise ValueError(f"unsupported mode {mode!r}")
    prm = problem.params
    lay = layout or Layout(problem.N, problem.n, 1)
    kern = kernel or problem.kernel(1, backend)
    eta = np.repeat(prm.eta_vector(problem.N).astype(bool), problem.n)
    tau_idx = lay.s - 1
    th, pp = lay.theta, lay.p

    if mode == "none":
        def in_flow(x):
            return x[tau_idx] >= prm.T0 - TIMER_TOL

        def in_jump(x):
            return False

        clock = GuardClock(tau_idx, prm.k_a * prm.omega, math.inf)
    else:
        def in_flow(x):
            return prm.T0 - TIMER_TOL <= x[tau_idx] <= prm.T + TIMER_TOL

        def in_jump(x):
            return x[tau_idx] >= prm.T - TIMER_TOL

        clock = GuardClock(tau_idx, prm.k_a * prm.omega, prm.T)

    def jump(x):
        y = x.copy()
        y[pp][eta] = x[th][eta]
        y[tau_idx] = prm.T0
        return y

    spec = HybridSystemSpec(
        flow_field=lambda x, u, t: kern.rhs(t, x),
        jump_map=jump,
        in_flow_set=in_flow,
        in_jump_set=in_jump,
        guard_clock=clock,
        flow_block=kern.integrate,
        zeno_cap=problem.N + 1,
        labels=lay.labels(),
    )
    return spec, lay


def decentralized_system(problem: DMCLProblem, backend: str | None = None,
                         kernel: FlowKernel | None = None, layout: Layout | None = None,
                         ) -> tuple[HybridSystemSpec, Layout]:
    """Per-agent-timer hybrid system with cascading coordinated restarts."""
    prm = problem.params
    if prm.k_t:
        raise ValueError("the decentralized system assumes k_t = 0")
    N = problem.N
    prm.validate_r(N)
    lay = layout or Layout(N, problem.n, N)
    kern = kernel or problem.kernel(N, backend)
    r = prm.r_vector(N)
    tau_sl = lay.tau
    n = problem.n
    neighbours = [problem.graph.out_neighbors(i) for i in range(N)]

    def in_flow(x):
        tau = x[tau_sl]
        return bool(np.all(tau >= prm.T0 - TIMER_TOL) and np.all(tau <= prm.T + TIMER_TOL))

    def in_jump(x):
        return bool(np.max(x[tau_sl]) >= prm.T - TIMER_TOL)

    def jump(x):
        y = x.copy()
        tau = x[tau_sl]
        i = int(np.flatnonzero(tau >= prm.T - TIMER_TOL)[0])
        y[lay.Nn + i * n: lay.Nn + (i + 1) * n] = x[i * n:(i + 1) * n]
        new_tau = tau.copy()
        new_tau[i] = prm.T0
        for j in neighbours[i]:
            new_tau[j] = coordination_reset(tau[j], r[j], prm.T0, prm.T, prm.tie_rule)
        y[tau_sl] = new_tau
        return y

    spec = HybridSystemSpec(
        flow_field=lambda x, u, t: kern.rhs(t, x),
        jump_map=jump,
        in_flow_set=in_flow,
        in_jump_set=in_jump,
        guard_clock=GuardClock(lay.tau_indices(), prm.k_a * prm.omega, prm.T),
        flow_block=kern.integrate,
        zeno_cap=N + 1,
        labels=lay.labels(),
    )
    return spec, lay


def simulate(problem: DMCLProblem, mode: str = "centralized", t_max: float = 10.0,
             step: float = 1e-3, x0: NetworkState | None = None, record_every: int = 1,
             j_max: int = 10**9, backend: str | None = None) -> tuple[HybridArc, Layout]:
    """Run the estimator alone from ``x0`` (default: zero estimates, ``p = theta``, timers at ``T0``)."""
    if mode not in RESTART_MODES:
        raise ValueError(f"mode must be one of {RESTART_MODES}")
    if mode == "decentralized":
        spec, lay = decentralized_system(problem, backend)
        if x0 is None:
            x0 = problem.initial_state(nt=problem.N)
    else:
        spec, lay = centralized_system(problem, mode, backend)
        if x0 is None:
            x0 = problem.initial_state(nt=1)
    arc = solve(spec, x0.to_vector(), t_max=t_max, j_max=j_max, step=step, record_every=record_every)
    return arc, lay


def theta_error_norm(arc: HybridArc, layout: Layout, theta_star) -> np.ndarray:
    th = arc.x[:, layout.theta].reshape(len(arc), layout.N, layout.n)
    return np.linalg.norm(th - np.asarray(theta_star)[None, None, :], axis=(1, 2))


# ---------------------------------------------------------------------------
# error-coordinate form


def error_matrices(problem: DMCLProblem, s: float):
    """Block matrices ``(A(s), Delta, L (x) I_n)`` of the error dynamics."""
    from dmcl.graphs import block_diag

    n = problem.n
    if problem.params.k_t:
        A_t = block_diag([np.outer(r(s), r(s)) for r in problem.regressors])
    else:
        A_t = np.zeros((problem.N * n, problem.N * n))
    Delta = block_diag(problem.data_matrices)
    Lb = np.kron(problem.laplacian, np.eye(n))
    return A_t, Delta, Lb


def disturbance_input(problem: DMCLProblem, tau, s: float) -> np.ndarray:
    """Input ``U`` with which the error momentum actually evolves."""
    prm = problem.params
    tau_a = np.broadcast_to(np.asarray(tau, dtype=float), (problem.N,))
    regs = problem.regressors or [None] * problem.N
    blocks = []
    for i, ds in enumerate(problem.datasets):
        U = assemble_U([ds], [regs[i]] if prm.k_t else [None], _single(problem.disturbance, i),
                       tau_a[i], prm.k_t, prm.k_c, s,
                       recorded_coef=2.0 * tau_a[i] * prm.k_r, realtime_sign=1.0)
        blocks.append(U)
    return prm.k_a * np.concatenate(blocks)


def _single(dist: Disturbance, i: int) -> Disturbance:
    phase = dist.phase[i:i + 1] if len(dist.phase) else np.zeros(1)
    rec = (dist.recorded[i],) if dist.recorded else ()
    return Disturbance(dist.amplitude, dist.freq, phase, rec, dist.kind)


def error_flow(theta_err, p_err, tau, s, problem: DMCLProblem):
    """``(theta~', p~')`` assembled from the block matrices of the error dynamics."""
    prm = problem.params
    A_t, Delta, Lb = error_matrices(problem, s)
    tau_b = np.repeat(np.broadcast_to(np.asarray(tau, dtype=float), (problem.N,)), problem.n)
    dtheta = prm.k_a * (2.0 / tau_b) * (p_err - theta_err)
    M = prm.k_t * A_t + prm.k_r * Delta + prm.k_c * Lb
    dp = -prm.k_a * 2.0 * tau_b * (M @ theta_err) + disturbance_input(problem, tau, s)
    return dtheta, dp


# ---------------------------------------------------------------------------
# baselines and diagnostics


def first_order_baseline(problem: DMCLProblem, times, theta0=None) -> np.ndarray:
    """Exact solution of ``theta' = -k_a (k_r Phi(theta) + k_c L theta)``.

    Returns ``|theta(t) - 1 (x) theta*|`` on ``times`` (recorded data only).
    """
    prm = problem.params
    _, Delta, Lb = error_matrices(replace(problem, params=replace(prm, k_t=0.0)), 0.0)
    M = prm.k_a * (prm.k_r * Delta + prm.k_c * Lb)
    c = prm.k_a * prm.k_r * problem.data_vectors().ravel()
    d = M.shape[0]
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = -M
    aug[:d, d] = c
    th0 = np.zeros(d) if theta0 is None else np.broadcast_to(
        np.asarray(theta0, dtype=float), (problem.N, problem.n)).ravel()
    z = np.concatenate([th0, [1.0]])
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size)
    star = np.tile(problem.theta_star, problem.N)
    t_prev = 0.0
    cache: dict[float, np.ndarray] = {}
    for k, t in enumerate(times):
        dt = round(t - t_prev, 12)
        if dt not in cache:
            cache[dt] = expm(aug * dt)
        z = cache[dt] @ z
        t_prev = t
        out[k] = np.linalg.norm(z[:d] - star)
    return out


def first_crossing(times, values, level: float) -> float:
    """First time at which ``values`` drops to ``level`` or below (``inf`` if never)."""
    idx = np.flatnonzero(np.asarray(values) <= level)
    return float(np.asarray(times)[idx[0]]) if idx.size else math.inf


@dataclass
class SyncResult:
    t_star: float
    j_star: int
    synchronized: bool
    in_sync: np.ndarray
    distance: np.ndarray


def sync_distance(tau, T0: float, T: float) -> np.ndarray:
    """Distance of timer vectors (rows) to ``[T0,T] 1 U {T0,T}^N``."""
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    consensus = 0.5 * (tau.max(axis=1) - tau.min(axis=1))
    corners = np.minimum(np.abs(tau - T0), np.abs(tau - T)).max(axis=1)
    return np.minimum(consensus, corners)


def sync_check(arc: HybridArc, T0: float, T: float, layout: Layout | None = None,
               tol: float = 1e-9) -> SyncResult:
    """First hybrid time after which the timers stay in the synchronisation set."""
    tau = arc.x[:, layout.tau] if layout is not None else arc.x
    dist = sync_distance(tau, T0, T)
    ok = dist <= tol
    if ok.all():
        k = 0
    elif not ok[-1]:
        return SyncResult(math.inf, -1, False, ok, dist)
    else:
        k = int(np.flatnonzero(~ok)[-1] + 1)
    return SyncResult(float(arc.t[k]), int(arc.j[k]), True, ok, dist)


def jump_contraction_fit(arc: HybridArc, layout: Layout, theta_star, first: int = 2,
                         last: int | None = None, floor: float = 1e-24):
    """Least-squares slope of ``log |theta~(t_j, j)|^2`` against ``j``.

    Samples below ``floor`` are dropped to stay clear of round-off.
    """
    idx = arc.first_sample_of_each_j()
    err = theta_error_norm(arc, layout, theta_star)[idx] ** 2
    js = np.arange(idx.size)
    sel = (js >= first) & (err > floor)
    if last is not None:
        sel &= js <= last
    if sel.sum() < 2:
        return math.nan, js[sel], err[sel]
    slope = np.polyfit(js[sel], np.log(err[sel]), 1)[0]
    return float(slope), js[sel], err[sel]


def restart_instants(arc: HybridArc, layout: Layout, T0: float, t_from: float = 0.0,
                     tol: float = TIMER_TOL) -> np.ndarray:
    """Sample indices right after a jump at which every timer equals ``T0``.

    For a centralized arc these are the post-jump samples; for a decentralized
    arc they mark the end of each completed restart cascade.
    """
    tau = arc.x[:, layout.tau]
    post = np.zeros(len(arc), dtype=bool)
    post[1:] = arc.j[1:] != arc.j[:-1]
    full = np.all(np.abs(tau - T0) <= tol, axis=1)
    return np.flatnonzero(post & full & (arc.t >= t_from))


def restart_contraction_fit(arc: HybridArc, layout: Layout, theta_star, T0: float, first: int = 2,
                            t_from: float = 0.0, floor: float = 1e-24):
    """Slope of ``log |theta~|^2`` against the restart count over full restarts ``first..``.

    Equivalent to :func:`jump_contraction_fit` for centralized arcs, and
    counts one restart per cascade for decentralized ones.
    """
    idx = restart_instants(arc, layout, T0, t_from)
    err = theta_error_norm(arc, layout, theta_star)[idx] ** 2
    ks = np.arange(1, idx.size + 1)
    sel = (ks >= first) & (err > floor)
    if sel.sum() < 2:
        return math.nan, ks[sel], err[sel]
    return float(np.polyfit(ks[sel], np.log(err[sel]), 1)[0]), ks[sel], err[sel]
