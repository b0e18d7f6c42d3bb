"""Regressors, recorded measurement data and disturbance signals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

RICHNESS_RTOL = 1e-12


class DataRichnessError(ValueError):
    """Raised when recorded data is not cooperatively rich (alpha not above round-off)."""


@dataclass(frozen=True)
class Regressor:
    """A bounded regressor ``phi: R -> R^n``.

    Parameters
    ----------
    evaluator
        Callable mapping a time (or, in applications, a state/input) to a
        length-``n`` vector.
    sup_bound
        Declared bound on ``|evaluator(.)|``.
    coef, rate
        Optional exponential-family description
        ``phi_m(s) = coef[m] * exp(-rate[m] * s)``, which the compiled flow
        kernels consume directly.
    """

    evaluator: Callable
    sup_bound: float
    n: int
    coef: np.ndarray | None = None
    rate: np.ndarray | None = None

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.evaluator(t), dtype=float)

    def check_bound(self, times, slack: float = 1e-12) -> bool:
        return all(np.linalg.norm(self(t)) <= self.sup_bound + slack for t in times)


def exponential_regressor(coef, rate) -> Regressor:
    """Regressor with entries ``coef[m] * exp(-rate[m] * s)`` for ``s >= 0``.

    With nonnegative rates the sup-norm over ``s >= 0`` is attained at 0.
    """
    coef = np.asarray(coef, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise ValueError("rates must be nonnegative for the sup bound to hold")

    def evaluator(s):
        return coef * np.exp(-rate * s)

    return Regressor(evaluator, float(np.linalg.norm(coef)), coef.size, coef, rate)


def identification_regressor(i: int) -> Regressor:
    """``phi_i(s) = (1, 10 e^{-i s}, 100 e^{-2 i s})`` for 1-based agent ``i``."""
    return exponential_regressor([1.0, 10.0, 100.0], [0.0, float(i), 2.0 * i])


@dataclass(frozen=True)
class RecordedSample:
    sample_time: float
    phi_value: np.ndarray
    psi_value: float
    noise: float = 0.0


@dataclass(frozen=True)
class AgentDataset:
    agent_id: int
    samples: tuple[RecordedSample, ...]
    n: int

    @property
    def phi_matrix(self) -> np.ndarray:
        """Samples stacked as rows, shape ``(k_bar, n)``."""
        if not self.samples:
            return np.zeros((0, self.n))
        return np.array([s.phi_value for s in self.samples], dtype=float)

    @property
    def psi_vector(self) -> np.ndarray:
        return np.array([s.psi_value for s in self.samples], dtype=float)

    @property
    def noise_vector(self) -> np.ndarray:
        return np.array([s.noise for s in self.samples], dtype=float)

    @property
    def data_matrix(self) -> np.ndarray:
        return data_matrix(self.samples, n=self.n)

    @property
    def data_vector(self) -> np.ndarray:
        """``sum_k phi_k psi_k``, the affine part of the recorded-data gradient."""
        return self.phi_matrix.T @ self.psi_vector

    def __len__(self) -> int:
        return len(self.samples)


def data_matrix(samples, n: int | None = None) -> np.ndarray:
    """Sum of outer products ``phi phi^T`` over recorded samples.

    ``samples`` may be a sequence of :class:`RecordedSample` or of raw vectors.
    """
    phis = [np.asarray(getattr(s, "phi_value", s), dtype=float) for s in samples]
    if not phis:
        if n is None:
            raise ValueError("dimension n is required for an empty sample list")
        return np.zeros((n, n))
    dims = {p.shape for p in phis}
    if len(dims) != 1 or phis[0].ndim != 1:
        raise ValueError(f"inconsistent regressor dimensions {sorted(dims)}")
    if n is not None and phis[0].size != n:
        raise ValueError(f"expected dimension {n}, got {phis[0].size}")
    P = np.stack(phis)
    D = P.T @ P
    return 0.5 * (D + D.T)


def csr_level(data_matrices) -> tuple[float, bool]:
    """Smallest eigenvalue of the summed data matrices and whether the data are rich.

    Richness requires ``alpha`` to exceed round-off relative to the largest
    eigenvalue, so rank-deficient data never pass on a lucky rounding sign.
    """
    mats = [np.asarray(d, dtype=float) for d in data_matrices]
    if len({m.shape for m in mats}) != 1:
        raise ValueError("data matrices must share a common dimension")
    eigs = np.linalg.eigvalsh(sum(mats))
    alpha = float(eigs[0])
    return alpha, alpha > RICHNESS_RTOL * max(float(eigs[-1]), 0.0)


def synthesize_dataset(
    regressor,
    theta_star,
    sample_times,
    noise=None,
    agent_id: int = 0,
) -> AgentDataset:
    """Record ``psi = phi(t)^T theta_star + nu`` at the given sample points."""
    theta_star = np.asarray(theta_star, dtype=float)
    times = list(sample_times)
    nu = np.zeros(len(times)) if noise is None else np.broadcast_to(
        np.asarray(noise, dtype=float), (len(times),))
    samples = []
    for t, v in zip(times, nu):
        phi = np.asarray(regressor(t), dtype=float)
        if phi.shape != theta_star.shape:
            raise ValueError(f"regressor dimension {phi.shape} does not match theta* {theta_star.shape}")
        samples.append(RecordedSample(float(t) if np.ndim(t) == 0 else float("nan"),
                                      phi, float(phi @ theta_star + v), float(v)))
    return AgentDataset(agent_id, tuple(samples), theta_star.size)


def datasets_from_phi(phis_per_agent, theta_star, noise=None, times=None) -> list[AgentDataset]:
    """Build datasets from explicit regressor values (state-dependent regressors)."""
    theta_star = np.asarray(theta_star, dtype=float)
    out = []
    for i, phis in enumerate(phis_per_agent):
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        nu = np.zeros(len(phis)) if noise is None else np.asarray(noise[i], dtype=float)
        ts = np.full(len(phis), np.nan) if times is None else np.asarray(times[i], dtype=float)
        samples = tuple(
            RecordedSample(float(t), phi, float(phi @ theta_star + v), float(v))
            for t, phi, v in zip(ts, phis, nu)
        )
        out.append(AgentDataset(i, samples, theta_star.size))
    return out


@dataclass(frozen=True)
class Disturbance:
    """Real-time disturbances ``upsilon_i(t) = amplitude * sin(freq * t + phase_i)``
    and fixed recorded noise ``nu_{i,k}``.
    """

    amplitude: float = 0.0
    freq: float = 1.0
    phase: np.ndarray = field(default_factory=lambda: np.zeros(0))
    recorded: tuple[np.ndarray, ...] = ()
    kind: str = "sinusoid"

    def realtime(self, t: float) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.zeros(len(self.phase))
        return self.amplitude * np.sin(self.freq * t + self.phase)

    def recorded_for(self, i: int, k_bar: int) -> np.ndarray:
        if not self.recorded:
            return np.zeros(k_bar)
        return np.asarray(self.recorded[i], dtype=float)

    def sup_norm(self) -> float:
        """Bound on the Euclidean norm of the stacked input ``u = (upsilon, nu)``."""
        rec = sum(float(np.sum(np.square(r))) for r in self.recorded)
        return math.sqrt(len(self.phase) * self.amplitude**2 + rec)

    def scaled(self, factor: float) -> "Disturbance":
        return Disturbance(self.amplitude * factor, self.freq, self.phase,
                           tuple(factor * np.asarray(r) for r in self.recorded), self.kind)


def sinusoid_disturbance(n_agents: int, amplitude: float, freq: float = 1.0,
                         recorded_pattern=None) -> Disturbance:
    """Phase-shifted sinusoids ``amplitude * sin(freq t + i)``.

    ``recorded_pattern`` is an optional per-agent list of unit-scale recorded
    noise values; it is multiplied by ``amplitude``.
    """
    phase = np.arange(n_agents, dtype=float)
    rec = () if recorded_pattern is None else tuple(
        amplitude * np.asarray(r, dtype=float) for r in recorded_pattern)
    return Disturbance(float(amplitude), float(freq), phase, rec)


def zero_disturbance(n_agents: int) -> Disturbance:
    return Disturbance(0.0, 1.0, np.zeros(n_agents), ())


def with_recorded_noise(datasets: Sequence[AgentDataset], theta_star,
                        disturbance: Disturbance) -> list[AgentDataset]:
    """Re-record datasets so that ``psi_k = phi_k^T theta* + nu_k`` uses the disturbance's noise."""
    theta_star = np.asarray(theta_star, dtype=float)
    out = []
    for ds in datasets:
        nu = disturbance.recorded_for(ds.agent_id, len(ds))
        samples = tuple(
            RecordedSample(s.sample_time, s.phi_value, float(s.phi_value @ theta_star + v), float(v))
            for s, v in zip(ds.samples, nu))
        out.append(AgentDataset(ds.agent_id, samples, ds.n))
    return out


def assemble_U(
    datasets,
    regressors,
    disturbance: Disturbance,
    tau,
    k_t: float,
    k_c: float,
    t: float,
    recorded_coef: float | None = None,
    realtime_sign: float = -1.0,
) -> np.ndarray:
    """Stacked disturbance input entering the error-coordinate dynamics.

    Block ``i`` is ``realtime_sign * 2 tau k_t phi_i(t) upsilon_i(t)
    + recorded_coef * sum_k phi_i(t_k) nu_{i,k}``. The defaults give the
    reference form, whose recorded-noise coefficient is ``k_c``. The
    input that the momentum flow actually sees, ``ṗ̃ = ... + U``, is obtained
    with ``realtime_sign=+1`` and ``recorded_coef=2 tau k_r``.
    """
    coef = k_c if recorded_coef is None else recorded_coef
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (len(datasets),))
    ups = disturbance.realtime(t)
    blocks = []
    for i, ds in enumerate(datasets):
        phi_t = regressors[i](t) if k_t else np.zeros(ds.n)
        block = realtime_sign * 2.0 * tau[i] * k_t * phi_t * (ups[i] if ups.size else 0.0)
        nu = disturbance.recorded_for(i, len(ds))
        if len(ds):
            block = block + coef * (ds.phi_matrix.T @ nu)
        blocks.append(block)
    return np.concatenate(blocks)


def disturbance_vector(disturbance: Disturbance, t: float, k_bars) -> np.ndarray:
    """Stacked ``u = (upsilon(t), nu)``."""
    parts = [disturbance.realtime(t)]
    parts += [disturbance.recorded_for(i, k) for i, k in enumerate(k_bars)]
    return np.concatenate(parts) if parts else np.zeros(0)


def input_gain_constant(datasets, phi_bar: float, k_t: float, k_r: float) -> float:
    """``C`` with ``|U| <= 2 tau C |u|`` for the input seen by the momentum flow."""
    worst = 0.0
    for ds in datasets:
        lam = float(np.linalg.eigvalsh(ds.data_matrix)[-1]) if len(ds) else 0.0
        worst = max(worst, k_t**2 * phi_bar**2 + k_r**2 * lam)
    return math.sqrt(worst)


# --- text serialisation -----------------------------------------------------

def save_datasets(datasets: Sequence[AgentDataset], path) -> None:
    """Write ``agent k t phi... psi nu`` lines (1-based agent and sample indices)."""
    lines = ["# agent k t phi... psi nu"]
    for ds in datasets:
        for k, s in enumerate(ds.samples, start=1):
            vals = [f"{ds.agent_id + 1}", f"{k}", f"{s.sample_time:.17g}"]
            vals += [f"{v:.17g}" for v in s.phi_value]
            vals += [f"{s.psi_value:.17g}", f"{s.noise:.17g}"]
            lines.append(" ".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_datasets(path, n_agents: int | None = None) -> list[AgentDataset]:
    rows: dict[int, list[RecordedSample]] = {}
    n = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 6:
            raise ValueError(f"{path}:{lineno}: expected 'agent k t phi... psi nu'")
        agent = int(parts[0]) - 1
        phi = np.array([float(v) for v in parts[3:-2]])
        if n is None:
            n = phi.size
        elif phi.size != n:
            raise ValueError(f"{path}:{lineno}: regressor dimension {phi.size} != {n}")
        rows.setdefault(agent, []).append(
            RecordedSample(float(parts[2]), phi, float(parts[-2]), float(parts[-1])))
    if n is None:
        raise ValueError(f"{path}: no samples found")
    count = n_agents if n_agents is not None else 1 + max(rows)
    return [AgentDataset(i, tuple(rows.get(i, [])), n) for i in range(count)]
