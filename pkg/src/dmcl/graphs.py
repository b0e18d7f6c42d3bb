"""Digraphs, Laplacians and the spectral constants that certify restart windows.

Conventions: ``adjacency[i, j] = a_ij`` is the weight of the edge ``i -> j``
and the Laplacian has ``l_ij = -a_ij`` off the diagonal, so row ``i`` of
``L @ theta`` couples agent ``i`` to its out-neighbours.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

DEFAULT_TOL = 1e-9


class GraphError(ValueError):
    """Raised for malformed or insufficiently connected graphs."""


@dataclass(frozen=True)
class Digraph:
    """Weighted directed graph without self-arcs."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise GraphError("a digraph needs at least two nodes")
        if np.any(np.diag(a) != 0.0):
            raise GraphError("self-arcs are not allowed")
        if np.any(a < 0.0) or not np.all(np.isfinite(a)):
            raise GraphError("edge weights must be finite and nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.adjacency)
        return [(int(i), int(j), float(self.adjacency[i, j])) for i, j in zip(rows, cols)]

    def out_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Digraph":
        """Build from ``(i, j, weight)`` or ``(i, j)`` tuples with 0-based indices."""
        a = np.zeros((n_nodes, n_nodes))
        for edge in edges:
            i, j = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise GraphError(f"edge ({i}, {j}) outside node range 0..{n_nodes - 1}")
            a[i, j] = w
        return cls(a)


def complete_graph(n: int, weight: float = 1.0) -> Digraph:
    return Digraph(weight * (np.ones((n, n)) - np.eye(n)))


def cycle_graph(n: int, weight: float = 1.0) -> Digraph:
    """Directed cycle ``0 -> 1 -> ... -> n-1 -> 0``."""
    return Digraph.from_edges(n, [(i, (i + 1) % n, weight) for i in range(n)])


def path_graph(n: int, weight: float = 1.0) -> Digraph:
    """Directed path ``0 -> 1 -> ... -> n-1`` (not strongly connected)."""
    return Digraph.from_edges(n, [(i, i + 1, weight) for i in range(n - 1)])


def undirected_cycle_graph(n: int, weight: float = 1.0) -> Digraph:
    edges = [(i, (i + 1) % n, weight) for i in range(n)]
    edges += [((i + 1) % n, i, weight) for i in range(n)]
    return Digraph.from_edges(n, edges)


PRESET_GRAPHS = {
    "complete": complete_graph,
    "cycle": cycle_graph,
    "undirected_cycle": undirected_cycle_graph,
    "path": path_graph,
}


def preset_graph(name: str, n: int) -> Digraph:
    try:
        return PRESET_GRAPHS[name](n)
    except KeyError:
        raise GraphError(f"unknown graph preset {name!r}; choose from {sorted(PRESET_GRAPHS)}") from None


def load_edge_list(path) -> Digraph:
    """Read ``i j weight`` lines with 1-based node indices.

    Blank lines and lines starting with ``#`` are ignored. The node count is
    the largest index seen.
    """
    triples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"{path}:{lineno}: expected 'i j [weight]', got {line!r}")
        i, j = int(parts[0]), int(parts[1])
        if i < 1 or j < 1:
            raise GraphError(f"{path}:{lineno}: node indices are 1-based")
        w = float(parts[2]) if len(parts) == 3 else 1.0
        triples.append((i - 1, j - 1, w))
    if not triples:
        raise GraphError(f"{path}: no edges found")
    n = 1 + max(max(i, j) for i, j, _ in triples)
    return Digraph.from_edges(n, triples)


def save_edge_list(g: Digraph, path) -> None:
    lines = [f"{i + 1} {j + 1} {w:.17g}" for i, j, w in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class Laplacian:
    matrix: np.ndarray
    graph: Digraph

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]


def _as_matrix(L) -> np.ndarray:
    return np.asarray(getattr(L, "matrix", L), dtype=float)


def build_laplacian(g: Digraph) -> Laplacian:
    a = g.adjacency
    L = -a.copy()
    L[np.diag_indices_from(L)] = a.sum(axis=1)
    L.setflags(write=False)
    return Laplacian(L, g)


def is_strongly_connected(g: Digraph) -> bool:
    """Forward and backward reachability from node 0."""
    a = g.adjacency > 0

    def reaches_all(adj):
        seen = np.zeros(adj.shape[0], dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(adj[i] & ~seen):
                seen[j] = True
                queue.append(j)
        return bool(seen.all())

    return reaches_all(a) and reaches_all(a.T)


def left_perron_vector(L, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Positive unit vector spanning the left null space of ``L``.

    Taken as the right singular vector of ``L.T`` for its smallest singular
    value; raises :class:`GraphError` if the null space is not one-dimensional.
    """
    Lm = _as_matrix(L)
    n = Lm.shape[0]
    _, s, vt = np.linalg.svd(Lm.T)
    scale = max(1.0, s[0])
    if s[-1] > tol * scale or (n > 1 and s[-2] <= tol * scale):
        raise GraphError(
            "left null space of L is not one-dimensional "
            f"(smallest singular values {s[-2:]!r}); graph is not strongly connected"
        )
    q = vt[-1]
    q = q * np.sign(q.sum())
    q = q / np.linalg.norm(q)
    if np.any(q <= tol):
        raise GraphError(f"left Perron vector has nonpositive entries: {q!r}")
    return q


def _kron_diag(q: np.ndarray, n: int) -> np.ndarray:
    return np.diag(np.repeat(q, n))


def block_diag(blocks) -> np.ndarray:
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    k = 0
    for b in blocks:
        m = b.shape[0]
        out[k:k + m, k:k + m] = b
        k += m
    return out


def build_sigma_omega(L, q, data_matrices, k_r: float, k_c: float):
    """Symmetric and antisymmetric parts of the weighted error-dynamics matrix.

    ``Sigma = k_r Q Delta + (k_c/2)(Q L + L^T Q)`` and
    ``Omega = (k_c/2)(Q L - L^T Q)`` with ``Q = diag(q) (x) I_n`` and every
    Laplacian lifted as ``L (x) I_n``.
    """
    Lm = _as_matrix(L)
    q = np.asarray(q, dtype=float)
    N = Lm.shape[0]
    if q.shape != (N,) or len(data_matrices) != N:
        raise ValueError(
            f"dimension mismatch: L is {N}x{N}, q has shape {q.shape}, "
            f"{len(data_matrices)} data matrices"
        )
    n = np.asarray(data_matrices[0]).shape[0]
    if any(np.asarray(d).shape != (n, n) for d in data_matrices):
        raise ValueError("all data matrices must be n x n with a common n")
    Qb = _kron_diag(q, n)
    Lb = np.kron(Lm, np.eye(n))
    QL = Qb @ Lb
    Delta = block_diag(data_matrices)
    Sigma = k_r * Qb @ Delta + 0.5 * k_c * (QL + QL.T)
    Omega = 0.5 * k_c * (QL - QL.T)
    # Q Delta is symmetric exactly (diagonal blocks commute); remove rounding.
    Sigma = 0.5 * (Sigma + Sigma.T)
    return Sigma, Omega


def chi(k_t: float, sigma_omega: float, sigma_q_max: float, phi_bar: float) -> float:
    """Class-K-infinity gain bounding the real-time data perturbation of Omega."""
    k_t = float(k_t)
    return math.sqrt(
        2.0 * sigma_omega * sigma_q_max * phi_bar**2 * k_t
        + sigma_q_max**2 * phi_bar**4 * k_t**2
    )


def sigma_min_analytic(
    alpha,
    N,
    k_r,
    k_c,
    lambda2,
    sigma_q_min,
    sigma_q_max,
    sigma_delta_max,
    variant: str = "averaged",
    clamp_warn: float = 1e-9,
) -> float:
    """Closed-form lower bound on the smallest eigenvalue of ``Sigma``.

    ``variant="averaged"`` uses the data level ``alpha / N`` that the
    projection onto the consensus subspace actually produces;
    ``variant="printed"`` uses ``alpha`` directly. Only the averaged form is
    a guaranteed bound.
    """
    if variant == "averaged":
        a = alpha / N
    elif variant == "printed":
        a = alpha
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if lambda2 <= 0.0:
        return 0.0
    data_term = 2.0 * k_r * sigma_q_min * a
    graph_term = k_c * lambda2
    cross = 4.0 * k_r * sigma_delta_max * sigma_q_max
    ratio = (data_term - graph_term) / math.hypot(data_term + graph_term, cross)
    if abs(ratio) > 1.0 + clamp_warn:
        warnings.warn(f"arccos argument {ratio} clamped to [-1, 1]", RuntimeWarning)
    theta1 = math.acos(min(1.0, max(-1.0, ratio)))
    theta2 = math.atan2(cross, data_term + graph_term)
    return 0.25 * k_c * lambda2 * (1.0 + math.cos(theta1 + theta2))


def _second_smallest(eigs: np.ndarray, tol: float) -> float:
    # The smallest eigenvalue is the structural zero; lambda2 is the next one.
    positive = eigs[eigs > tol]
    return float(positive[0]) if positive.size else 0.0


@dataclass(frozen=True)
class SpectralCertificate:
    """Every scalar constant needed to certify a restart window."""

    q: np.ndarray
    sigma_q_min: float
    sigma_q_max: float
    Sigma: np.ndarray = field(repr=False)
    Omega: np.ndarray = field(repr=False)
    sigma_sigma_min: float
    sigma_sigma_max: float
    sigma_sigma_min_analytic: float
    sigma_sigma_min_analytic_printed: float
    sigma_sigma_max_bound: float
    sigma_omega: float
    lambda2: float
    lambdaN: float
    sigma_delta_max: float
    alpha: float
    k_r: float
    k_c: float
    k_t: float
    phi_bar: float
    chi_kt: float
    n_agents: int
    n_params: int
    omega: float = float("nan")
    T0: float = float("nan")
    T_lower: float = float("nan")
    T_upper: float = float("nan")
    T_star: float = float("nan")

    @property
    def window_feasible(self) -> bool:
        return bool(self.T_lower < self.T_upper)

    def contains(self, T: float) -> bool:
        return bool(self.T_lower < T < self.T_upper)

    def mu(self, T: float) -> float:
        from dmcl.core import mu

        return mu(T, self)

    def to_dict(self, include_matrices: bool = False) -> dict:
        d = asdict(self)
        d["q"] = [float(x) for x in self.q]
        if include_matrices:
            d["Sigma"] = self.Sigma.tolist()
            d["Omega"] = self.Omega.tolist()
        else:
            d.pop("Sigma")
            d.pop("Omega")
        d["sigma_omega_sq"] = self.sigma_omega**2
        d["window_feasible"] = self.window_feasible
        for key, value in list(d.items()):
            if isinstance(value, float) and not math.isfinite(value):
                d[key] = "inf" if value > 0 else ("-inf" if value < 0 else "nan")
        return d

    def to_json(self, include_matrices: bool = False, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(include_matrices), **kwargs)


def certify(
    g: Digraph,
    data_matrices,
    k_r: float,
    k_c: float,
    k_t: float = 0.0,
    phi_bar: float = 0.0,
    omega: float | None = None,
    T0: float | None = None,
    tol: float = DEFAULT_TOL,
) -> SpectralCertificate:
    """Compute the spectral certificate (and, if ``omega, T0`` given, the window)."""
    if not is_strongly_connected(g):
        raise GraphError("graph is not strongly connected")
    lap = build_laplacian(g)
    q = left_perron_vector(lap, tol=tol)
    N = g.n_nodes
    data_matrices = [np.asarray(d, dtype=float) for d in data_matrices]
    n = data_matrices[0].shape[0]
    Sigma, Omega = build_sigma_omega(lap, q, data_matrices, k_r, k_c)
    s_eigs = np.linalg.eigvalsh(Sigma)
    Qs = np.diag(q)
    M = Qs @ lap.matrix + lap.matrix.T @ Qs
    m_eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
    lambda2 = _second_smallest(m_eigs, tol)
    lambdaN = float(m_eigs[-1])
    alpha = float(np.linalg.eigvalsh(sum(data_matrices))[0])
    sigma_delta_max = max(float(np.linalg.eigvalsh(d)[-1]) for d in data_matrices)
    sigma_omega = float(np.linalg.svd(Omega, compute_uv=False)[0]) if k_c else 0.0
    if sigma_omega <= tol:
        # Symmetric Laplacians give an exactly zero asymmetry term.
        sigma_omega = 0.0
    sq_min, sq_max = float(q.min()), float(q.max())
    bound_args = (alpha, N, k_r, k_c, lambda2, sq_min, sq_max, sigma_delta_max)
    cert = SpectralCertificate(
        q=q,
        sigma_q_min=sq_min,
        sigma_q_max=sq_max,
        Sigma=Sigma,
        Omega=Omega,
        sigma_sigma_min=float(s_eigs[0]),
        sigma_sigma_max=float(s_eigs[-1]),
        sigma_sigma_min_analytic=sigma_min_analytic(*bound_args, variant="averaged"),
        sigma_sigma_min_analytic_printed=sigma_min_analytic(*bound_args, variant="printed"),
        sigma_sigma_max_bound=k_r * sq_max * sigma_delta_max + 0.5 * k_c * lambdaN,
        sigma_omega=sigma_omega,
        lambda2=lambda2,
        lambdaN=lambdaN,
        sigma_delta_max=sigma_delta_max,
        alpha=alpha,
        k_r=float(k_r),
        k_c=float(k_c),
        k_t=float(k_t),
        phi_bar=float(phi_bar),
        chi_kt=chi(k_t, sigma_omega, sq_max, phi_bar),
        n_agents=N,
        n_params=n,
    )
    if omega is not None and T0 is not None:
        cert = with_window(cert, omega, T0)
    return cert


def restart_window(cert: SpectralCertificate, omega: float, T0: float) -> tuple[float, float]:
    """Admissible restart thresholds ``(T_lower, T_upper)``.

    An empty window (``T_lower >= T_upper``) is returned as-is; callers check
    :attr:`SpectralCertificate.window_feasible` or compare the endpoints.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError(f"omega must lie in (0, 1), got {omega}")
    if T0 <= 0.0:
        raise ValueError(f"T0 must be positive, got {T0}")
    if cert.sigma_sigma_min <= 0.0:
        # Data not cooperatively rich: no admissible restart period.
        return math.inf, 0.0
    T_lower = math.sqrt(cert.sigma_q_max / (2.0 * cert.sigma_sigma_min) + T0**2)
    asym = cert.sigma_omega**2 + cert.chi_kt**2
    if asym == 0.0:
        T_upper = math.inf
    else:
        T_upper = math.sqrt(cert.sigma_q_min * (1.0 - omega) * cert.sigma_sigma_min / asym)
    return T_lower, T_upper


def with_window(cert: SpectralCertificate, omega: float, T0: float) -> SpectralCertificate:
    T_lower, T_upper = restart_window(cert, omega, T0)
    return replace(cert, omega=float(omega), T0=float(T0), T_lower=T_lower,
                   T_upper=T_upper, T_star=math.e * T_lower)


@dataclass(frozen=True)
class OptimalRestart:
    T_star: float
    mu_star: float
    t_eps: float


def optimal_restart(
    cert: SpectralCertificate,
    T0: float,
    epsilon: float | None = None,
    omega: float | None = None,
    y0_norm: float | None = None,
    c_upper: float | None = None,
    c_lower: float | None = None,
) -> OptimalRestart:
    """Restart period minimising the per-unit-time contraction bound.

    If ``epsilon, omega, y0_norm, c_upper, c_lower`` are all supplied, also
    returns the continuous time after which the squared error bound drops
    below ``epsilon``.
    """
    if cert.sigma_sigma_min <= 0.0:
        raise ValueError("sigma_sigma_min must be positive for an optimal restart period")
    T_lower = math.sqrt(cert.sigma_q_max / (2.0 * cert.sigma_sigma_min) + T0**2)
    T_star = math.e * T_lower
    t_eps = float("nan")
    if None not in (epsilon, omega, y0_norm, c_upper, c_lower):
        arg = (c_upper / c_lower) * y0_norm**2 / epsilon
        t_eps = max(0.0, (T_star - T0) * math.log(arg) / (2.0 * omega))
    return OptimalRestart(T_star=T_star, mu_star=(T_lower / T_star) ** 2, t_eps=t_eps)


def contraction_per_time(T: float, T_lower: float, T0: float) -> float:
    """``mu(T) ** (1 / (T - T0))``, the bound's contraction per unit of timer growth."""
    return ((T_lower / T) ** 2) ** (1.0 / (T - T0))
