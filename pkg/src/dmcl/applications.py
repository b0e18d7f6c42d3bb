"""Closed-loop experiments that embed the cooperative estimator in a plant.

Two interconnections are provided:

* cooperative model-reference adaptive control (MRAC) of planar plants with a
  matched uncertainty ``B_i phi(chi_i)^T theta*``;
* data-driven feedback optimisation, where each agent drives a stable LTI
  plant to the maximiser of an unknown concave steady-state map over a ball.

In both cases the estimator uses recorded data only (``k_t = 0``), the plant
flows through estimator restarts unchanged, and an escape guard stops runs
whose plant state leaves a large ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from dmcl.core import (
    DMCLParams,
    DMCLProblem,
    Layout,
    centralized_system,
    decentralized_system,
    first_crossing,
    first_order_baseline,
    theta_error_norm,
)
from dmcl.dataset import AgentDataset, RecordedSample
from dmcl.graphs import Digraph
from dmcl.hybrid import HybridArc, solve
from dmcl.kernels import FlowKernel, feedopt_gradient, mrac_features

DEFAULT_ESCAPE_BOUND = 1e6


def _escape_guard(sl: slice, bound: float):
    def guard(x):
        if not np.all(np.abs(x[sl]) <= bound):
            return f"plant state escaped the ball of radius {bound:g}"
        return None

    return guard


# ---------------------------------------------------------------------------
# MRAC


@dataclass
class MracConfig:
    """Planar plants ``chi' = A_i chi + B_i (u + phi(chi)^T theta*)`` tracking a reference model.

    Parameters
    ----------
    A, B
        Per-agent plant matrices, shapes ``(N, 2, 2)`` and ``(N, 2)``.
    A_r, B_r
        Reference model ``chi_r' = A_r chi_r + B_r r``.
    K
        State-feedback gain (row vector of length 2).
    theta_star
        True uncertainty weights for ``phi(chi) = (sin chi_1, |chi_2| chi_2, exp(chi_1 chi_2))``.
    r
        Constant reference input.
    chi0, chi_r0
        Initial plant and reference states.
    """

    A: np.ndarray
    B: np.ndarray
    A_r: np.ndarray
    B_r: np.ndarray
    K: np.ndarray
    theta_star: np.ndarray
    r: float = 0.0
    chi0: np.ndarray | None = None
    chi_r0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    escape_bound: float = DEFAULT_ESCAPE_BOUND

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.A_r = np.asarray(self.A_r, dtype=float)
        self.B_r = np.asarray(self.B_r, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        self.chi_r0 = np.asarray(self.chi_r0, dtype=float)
        N = self.A.shape[0]
        if self.A.shape != (N, 2, 2) or self.B.shape != (N, 2):
            raise ValueError("A must be (N, 2, 2) and B must be (N, 2)")
        if self.A_r.shape != (2, 2) or self.B_r.shape != (2,) or self.K.shape != (2,):
            raise ValueError("A_r must be 2x2; B_r and K must have length 2")
        if self.theta_star.shape != (3,):
            raise ValueError("theta_star must have length 3")
        if np.any(np.linalg.eigvals(self.A_r).real >= 0):
            raise ValueError("reference model A_r must be Hurwitz")
        self.chi0 = np.zeros((N, 2)) if self.chi0 is None else np.asarray(self.chi0, dtype=float).reshape(N, 2)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    def closed_loop_matrix(self, i: int) -> np.ndarray:
        """``A_m = A_i - B_i K`` governing the tracking error."""
        return self.A[i] - np.outer(self.B[i], self.K)


def mrac_feedforward(chi_r, r, A_i, B_i, A_r, B_r) -> float:
    """Least-squares ``u_f`` with ``B_i u_f ~= (A_r - A_i) chi_r + B_r r``."""
    w = (np.asarray(A_r) - np.asarray(A_i)) @ np.asarray(chi_r, dtype=float) + np.asarray(B_r) * r
    B_i = np.asarray(B_i, dtype=float)
    return float(B_i @ w / (B_i @ B_i))


def mrac_control(theta_i, chi_i, chi_r, config: MracConfig, i: int) -> float:
    """``u_i = -K (chi_i - chi_r) + u_f(chi_r) - phi(chi_i)^T theta_i``."""
    chi_i = np.asarray(chi_i, dtype=float)
    chi_r = np.asarray(chi_r, dtype=float)
    u_s = -float(config.K @ (chi_i - chi_r))
    u_f = mrac_feedforward(chi_r, config.r, config.A[i], config.B[i], config.A_r, config.B_r)
    u_a = float(mrac_features(chi_i) @ np.asarray(theta_i, dtype=float))
    return u_s + u_f - u_a


def mrac_plant_rhs(chi_i, u, config: MracConfig, i: int) -> np.ndarray:
    chi_i = np.asarray(chi_i, dtype=float)
    return config.A[i] @ chi_i + config.B[i] * (u + float(mrac_features(chi_i) @ config.theta_star))


def mrac_error_rhs(theta_i, chi_i, chi_r, config: MracConfig, i: int) -> np.ndarray:
    """Tracking-error derivative ``e' = chi_i' - chi_r'`` under :func:`mrac_control`."""
    u = mrac_control(theta_i, chi_i, chi_r, config, i)
    return mrac_plant_rhs(chi_i, u, config, i) - (config.A_r @ chi_r + config.B_r * config.r)


def mrac_record_data(config: MracConfig, sample_times, chi0=None) -> list[AgentDataset]:
    """Record ``(phi(chi), phi(chi)^T theta*)`` along a preliminary run with ``u = -K chi``."""
    chi0 = config.chi0 if chi0 is None else np.asarray(chi0, dtype=float).reshape(config.N, 2)
    times = np.asarray(sorted(sample_times), dtype=float)
    out = []
    for i in range(config.N):
        def f(t, c, i=i):
            return mrac_plant_rhs(c, -float(config.K @ c), config, i)

        if times[-1] > 0:
            sol = solve_ivp(f, (0.0, float(times[-1])), chi0[i], t_eval=times, rtol=1e-11, atol=1e-13)
            states = sol.y.T
        else:
            states = np.repeat(chi0[i][None], times.size, axis=0)
        samples = tuple(RecordedSample(float(t), mrac_features(c), float(mrac_features(c) @ config.theta_star), 0.0)
                        for t, c in zip(times, states))
        out.append(AgentDataset(i, samples, 3))
    return out


def circle_initial_states(N: int, radius: float) -> np.ndarray:
    """``radius (cos 2 pi i / N, sin 2 pi i / N)`` for agents ``i = 1..N``."""
    ang = 2.0 * np.pi * np.arange(1, N + 1) / N
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass
class ClosedLoopResult:
    arc: HybridArc
    layout: Layout
    problem: DMCLProblem
    theta_error: np.ndarray
    plant: dict

    @property
    def t(self) -> np.ndarray:
        return self.arc.t

    def time_to(self, level: float) -> float:
        return first_crossing(self.arc.t, self.theta_error, level)

    def baseline_theta_error(self, theta0=None) -> np.ndarray:
        return first_order_baseline(self.problem, self.arc.t, theta0)


def _hybrid(problem: DMCLProblem, kern: FlowKernel, lay: Layout, mode: str):
    if mode == "decentralized":
        return decentralized_system(problem, kernel=kern, layout=lay)[0]
    return centralized_system(problem, mode, kernel=kern, layout=lay)[0]


def _estimator_x0(problem: DMCLProblem, nt: int, theta0=None) -> np.ndarray:
    return problem.initial_state(theta0, nt=nt).to_vector()


def mrac_closed_loop(config: MracConfig, params: DMCLParams, graph: Digraph,
                     datasets: list[AgentDataset], t_max: float, step: float = 1e-3,
                     mode: str = "decentralized", theta0=None, record_every: int = 10,
                     backend: str | None = None) -> ClosedLoopResult:
    """Simulate plants, reference model and estimator together."""
    if params.k_t:
        raise ValueError("the MRAC interconnection uses recorded data only (k_t = 0)")
    problem = DMCLProblem(graph, datasets, config.theta_star, params)
    N = config.N
    nt = N if mode == "decentralized" else 1
    lay = Layout(N, 3, nt, extra=2 * N + 2)
    args = problem.kernel_args(nt, extra_fpar=[config.r]) + (config.A, config.B, config.K, config.A_r, config.B_r)
    kern = FlowKernel("mrac", args, backend)
    spec = _hybrid(problem, kern, lay, mode)
    spec.labels = lay.labels([f"chi_{i}_{k}" for i in range(N) for k in range(2)] + ["chi_r_0", "chi_r_1"])
    spec.state_guard = _escape_guard(lay.plant, config.escape_bound)
    x0 = np.concatenate([_estimator_x0(problem, nt, theta0), config.chi0.ravel(), config.chi_r0])
    arc = solve(spec, x0, t_max=t_max, step=step, record_every=record_every)
    plant = arc.x[:, lay.plant]
    chi = plant[:, :2 * N].reshape(len(arc), N, 2)
    chi_r = plant[:, 2 * N:]
    e = chi - chi_r[:, None, :]
    theta = arc.x[:, lay.theta].reshape(len(arc), N, 3)
    u = np.stack([[mrac_control(theta[k, i], chi[k, i], chi_r[k], config, i) for i in range(N)]
                  for k in range(len(arc))])
    return ClosedLoopResult(arc, lay, problem, theta_error_norm(arc, lay, config.theta_star),
                            {"chi": chi, "chi_r": chi_r, "tracking_error": np.linalg.norm(e, axis=2),
                             "u": u})


# ---------------------------------------------------------------------------
# feedback optimisation


def project_ball(point, center, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball ``center + radius B``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    point = np.asarray(point, dtype=float)
    center = np.asarray(center, dtype=float)
    d = point - center
    nd = float(np.linalg.norm(d))
    if nd <= radius:
        return point.copy()
    return center + radius * d / nd


def response_basis(u) -> np.ndarray:
    """Quadratic basis ``(u1^2, u1, u2^2, u2, u1 u2, 1)``."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    return np.stack([u1**2, u1, u2**2, u2, u1 * u2, np.ones_like(u1)], axis=-1)


@dataclass
class FeedbackOptConfig:
    """Agents ``chi' = -a_i chi + b_i u``, ``y = chi^T Q chi + w^T chi + d`` with ``Q = -I``.

    The steady-state map is ``m_i(u) = (b_i / a_i) u``; with ``b_i = a_i`` the
    response ``J_i(u) = -|u|^2 + w_i^T u + d_i`` is linear in the basis
    :func:`response_basis` with weights ``theta*``.
    """

    a_rate: np.ndarray
    b_gain: np.ndarray
    w: np.ndarray
    d: np.ndarray
    xi: np.ndarray
    radius: np.ndarray
    theta_star: np.ndarray
    eps_u: float = 0.01
    u0: np.ndarray | None = None
    chi0: np.ndarray | None = None
    escape_bound: float = DEFAULT_ESCAPE_BOUND

    def __post_init__(self):
        self.a_rate = np.asarray(self.a_rate, dtype=float)
        N = self.a_rate.size
        self.b_gain = np.broadcast_to(np.asarray(self.b_gain, dtype=float), (N,)).copy()
        self.w = np.broadcast_to(np.asarray(self.w, dtype=float), (N, 2)).copy()
        self.d = np.broadcast_to(np.asarray(self.d, dtype=float), (N,)).copy()
        self.xi = np.asarray(self.xi, dtype=float).reshape(N, 2)
        self.radius = np.broadcast_to(np.asarray(self.radius, dtype=float), (N,)).copy()
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if np.any(self.a_rate <= 0):
            raise ValueError("plants must be exponentially stable (a_i > 0)")
        if np.any(self.radius <= 0):
            raise ValueError("constraint radii must be positive")
        if self.theta_star.shape != (6,):
            raise ValueError("theta_star must have length 6")
        if not self.eps_u > 0:
            raise ValueError("eps_u must be positive")
        self.u0 = self.xi.copy() if self.u0 is None else np.asarray(self.u0, dtype=float).reshape(N, 2)
        self.chi0 = np.zeros((N, 2)) if self.chi0 is None else np.asarray(self.chi0, dtype=float).reshape(N, 2)

    @property
    def N(self) -> int:
        return self.a_rate.size

    def steady_state(self, u, i: int) -> np.ndarray:
        return (self.b_gain[i] / self.a_rate[i]) * np.asarray(u, dtype=float)

    def output(self, chi, i: int) -> float:
        chi = np.asarray(chi, dtype=float)
        return float(-chi @ chi + self.w[i] @ chi + self.d[i])

    def J(self, u, i: int) -> float:
        return self.output(self.steady_state(u, i), i)

    def J_many(self, U, i: int) -> np.ndarray:
        """Vectorised :meth:`J` over the rows of ``U``."""
        chi = self.steady_state(U, i)
        return -np.einsum("kj,kj->k", chi, chi) + chi @ self.w[i] + self.d[i]

    def maximizer(self, i: int) -> np.ndarray:
        """Constrained maximiser for ``b_i = a_i``: projection of ``w_i / 2`` onto ``U_i``."""
        return project_ball(0.5 * self.w[i], self.xi[i], float(self.radius[i]))


def grid_maximizer(J, center, radius: float, n_radii: int = 400, n_angles: int = 3600) -> np.ndarray:
    """Brute-force maximiser of ``J`` over a closed disc on a polar grid.

    The grid contains the boundary circle, where constrained maximisers of
    concave maps sit. ``J`` maps an ``(M, 2)`` array of inputs to ``M`` values.
    """
    rad = np.linspace(0.0, radius, n_radii + 1)
    ang = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    Rg, Ag = np.meshgrid(rad, ang, indexing="ij")
    pts = np.stack([Rg.ravel() * np.cos(Ag.ravel()), Rg.ravel() * np.sin(Ag.ravel())], axis=1)
    pts += np.asarray(center, dtype=float)
    vals = np.asarray(J(pts), dtype=float)
    return pts[int(np.argmax(vals))]


def feedopt_record_data(config: FeedbackOptConfig, points) -> list[AgentDataset]:
    """Steady-state measurements ``y = J_i(u)`` at the given inputs (``points[i]`` per agent)."""
    out = []
    for i in range(config.N):
        samples = tuple(RecordedSample(float(k), response_basis(u), config.J(u, i), 0.0)
                        for k, u in enumerate(np.asarray(points[i], dtype=float)))
        out.append(AgentDataset(i, samples, 6))
    return out


def radial_data_points(config: FeedbackOptConfig, offset: float) -> np.ndarray:
    """Two inputs per agent at ``xi_i +- offset * xi_i / |xi_i|`` (inside ``U_i``)."""
    pts = []
    for i in range(config.N):
        c = config.xi[i]
        nc = np.linalg.norm(c)
        e = c / nc if nc > 0 else np.array([1.0, 0.0])
        pts.append([c + offset * e, c - offset * e])
    return np.array(pts)


def feedback_opt_closed_loop(config: FeedbackOptConfig, params: DMCLParams, graph: Digraph,
                             datasets: list[AgentDataset], t_max: float, step: float = 1e-2,
                             mode: str = "decentralized", theta0=None, record_every: int = 10,
                             backend: str | None = None) -> ClosedLoopResult:
    """Simulate plants, projected-gradient input dynamics and estimator together."""
    if params.k_t:
        raise ValueError("the feedback-optimisation interconnection uses recorded data only (k_t = 0)")
    problem = DMCLProblem(graph, datasets, config.theta_star, params)
    N = config.N
    nt = N if mode == "decentralized" else 1
    lay = Layout(N, 6, nt, extra=4 * N)
    args = problem.kernel_args(nt, extra_fpar=[config.eps_u]) + (
        config.a_rate, config.b_gain, config.xi, config.radius)
    kern = FlowKernel("feedopt", args, backend)
    spec = _hybrid(problem, kern, lay, mode)
    spec.labels = lay.labels([f"chi_{i}_{k}" for i in range(N) for k in range(2)]
                             + [f"u_{i}_{k}" for i in range(N) for k in range(2)])
    spec.state_guard = _escape_guard(lay.plant, config.escape_bound)
    x0 = np.concatenate([_estimator_x0(problem, nt, theta0), config.chi0.ravel(), config.u0.ravel()])
    arc = solve(spec, x0, t_max=t_max, step=step, record_every=record_every)
    plant = arc.x[:, lay.plant]
    chi = plant[:, :2 * N].reshape(len(arc), N, 2)
    u = plant[:, 2 * N:].reshape(len(arc), N, 2)
    J = np.array([[config.J(u[k, i], i) for i in range(N)] for k in range(len(arc))])
    y = np.array([[config.output(chi[k, i], i) for i in range(N)] for k in range(len(arc))])
    return ClosedLoopResult(arc, lay, problem, theta_error_norm(arc, lay, config.theta_star),
                            {"chi": chi, "u": u, "J": J, "y": y})


def input_rhs(u, theta, config: FeedbackOptConfig) -> np.ndarray:
    """``u' = eps_u (P_U(u + Dphi(u)^T theta) - u)`` for all agents (rows)."""
    u = np.asarray(u, dtype=float).reshape(config.N, 2)
    theta = np.asarray(theta, dtype=float).reshape(config.N, 6)
    z = u + feedopt_gradient(theta, u)
    proj = np.array([project_ball(z[i], config.xi[i], float(config.radius[i])) for i in range(config.N)])
    return config.eps_u * (proj - u)


__all__ = [
    "ClosedLoopResult", "FeedbackOptConfig", "MracConfig", "circle_initial_states",
    "feedback_opt_closed_loop", "feedopt_record_data", "grid_maximizer", "input_rhs",
    "mrac_closed_loop", "mrac_control", "mrac_error_rhs", "mrac_feedforward", "mrac_plant_rhs",
    "mrac_record_data", "project_ball", "radial_data_points", "response_basis",
]
