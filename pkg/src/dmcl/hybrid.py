"""A small fixed-step integrator for hybrid dynamical systems.

Solutions live on hybrid time domains: ``t`` advances while the state flows,
``j`` counts jumps. Flow intervals are integrated with classical RK4; the last
step of each interval is shortened so that it lands exactly on the guard,
either from a constant-rate clock (exact) or by bisection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import total_ordering
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

DEFAULT_STEP = 1e-3
_BISECT_TOL = 1e-12


class HybridError(RuntimeError):
    """Base class for solver failures; carries the offending hybrid time."""

    def __init__(self, message: str, t: float, j: int):
        super().__init__(f"{message} at hybrid time (t={t:.12g}, j={j})")
        self.t = t
        self.j = j


class ZenoError(HybridError):
    pass


class DivergenceError(HybridError):
    pass


class OutOfSetError(HybridError):
    pass


@total_ordering
@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int

    def __lt__(self, other: "HybridTime") -> bool:
        return (self.t, self.j) < (other.t, other.j)


def guard_time(tau: float, omega: float, T: float) -> float:
    """Time for a clock at ``tau`` growing at rate ``omega`` to reach ``T``."""
    if omega <= 0.0:
        raise ValueError(f"clock rate must be positive, got {omega}")
    return max(0.0, (T - tau) / omega)


@dataclass(frozen=True)
class GuardClock:
    """State coordinates that grow at a known rate towards a threshold.

    When several indices are given the guard is reached by their maximum.
    """

    index: int | tuple[int, ...]
    rate: float
    threshold: float

    @property
    def indices(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.index, dtype=int))

    def time_to_guard(self, x: np.ndarray) -> float:
        return guard_time(float(np.max(x[self.indices])), self.rate, self.threshold)

    def snap(self, x: np.ndarray, tol: float = 1e-9) -> None:
        idx = self.indices
        close = np.abs(x[idx] - self.threshold) <= tol
        x[idx[close]] = self.threshold


@dataclass
class HybridSystemSpec:
    """Data ``(C, F, D, G)`` of a hybrid system plus solver hints.

    Parameters
    ----------
    flow_field
        ``f(x, u, t) -> dx``; may be ``None`` if ``flow_block`` is supplied.
    jump_map
        Deterministic selection ``g(x) -> x+``.
    in_flow_set, in_jump_set
        Membership predicates.
    guard_clock
        Optional constant-rate clock used for exact event times.
    flow_block
        Optional fast path ``(t0, x0, h, nsteps, h_last, stride) -> (ts, xs)``
        integrating the autonomous flow in one call (see :mod:`dmcl.kernels`).
    zeno_cap
        Maximum number of consecutive jumps at one continuous time.
    state_guard
        Optional ``x -> message or None``; a message aborts the run (escape guard).
    diagnostics
        Optional vectorised ``(ts, xs) -> {name: values}`` evaluated after the run.
    """

    flow_field: Callable | None
    jump_map: Callable
    in_flow_set: Callable
    in_jump_set: Callable
    guard_clock: GuardClock | None = None
    flow_block: Callable | None = None
    zeno_cap: int = 100
    state_guard: Callable | None = None
    diagnostics: Callable | None = None
    labels: Sequence[str] | None = None


@dataclass
class HybridArc:
    """Samples of a hybrid solution.

    ``jump_indices`` holds the position of every post-jump sample; the sample
    just before it is the pre-jump state at the same ``t``.
    """

    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    jump_indices: np.ndarray
    u: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    labels: Sequence[str] | None = None
    status: str = "ok"

    def __len__(self) -> int:
        return self.t.size

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]

    @property
    def n_jumps(self) -> int:
        return int(self.j[-1]) if self.j.size else 0

    @property
    def times(self) -> list[HybridTime]:
        return [HybridTime(float(t), int(j)) for t, j in zip(self.t, self.j)]

    def pre_jump_indices(self) -> np.ndarray:
        return self.jump_indices - 1

    def flow_intervals(self):
        """Yield ``(start, stop)`` slices of samples sharing one ``j``."""
        bounds = np.concatenate([[0], self.jump_indices, [len(self)]])
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b > a:
                yield int(a), int(b)

    def first_sample_of_each_j(self) -> np.ndarray:
        """Index of the first sample with each jump count (the ``t_j`` samples)."""
        return np.concatenate([[0], self.jump_indices]).astype(int)

    def validate(self) -> None:
        """Assert the hybrid-time-domain structure."""
        dt = np.diff(self.t)
        dj = np.diff(self.j)
        if np.any(dj < 0) or np.any(dj > 1):
            raise AssertionError("jump counter must increase by 0 or 1 between samples")
        if np.any(dt[dj == 0] <= 0.0):
            raise AssertionError("t must increase strictly within a flow interval")
        if np.any(dt[dj == 1] != 0.0):
            raise AssertionError("t must be unchanged across a jump")
        expected = np.flatnonzero(dj == 1) + 1
        if not np.array_equal(expected, self.jump_indices):
            raise AssertionError("jump_indices inconsistent with j")

    def columns(self) -> list[str]:
        d = self.x.shape[1]
        names = list(self.labels) if self.labels is not None else [f"state_{k}" for k in range(d)]
        return ["t", "j"] + names + [f"diag_{k}" for k in self.diagnostics]

    def to_csv(self, path) -> None:
        cols = self.columns()
        data = [self.t[:, None], self.j[:, None].astype(float), self.x]
        data += [np.asarray(v, dtype=float)[:, None] for v in self.diagnostics.values()]
        table = np.hstack(data)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in table:
                writer.writerow([repr(float(v)) if k != 1 else str(int(v)) for k, v in enumerate(row)])

    @classmethod
    def from_csv(cls, path) -> "HybridArc":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
        if rows.size == 0:
            rows = rows.reshape(0, len(header))
        diag_cols = [k for k, name in enumerate(header) if name.startswith("diag_")]
        state_cols = [k for k in range(2, len(header)) if k not in diag_cols]
        j = rows[:, 1].astype(int)
        jumps = np.flatnonzero(np.diff(j) == 1) + 1
        diags = {header[k][5:]: rows[:, k] for k in diag_cols}
        labels = [header[k] for k in state_cols]
        return cls(rows[:, 0], j, rows[:, state_cols], jumps, None, diags, labels)


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Recorder:
    def __init__(self):
        self.t: list[np.ndarray] = []
        self.j: list[np.ndarray] = []
        self.x: list[np.ndarray] = []
        self.jumps: list[int] = []
        self.count = 0

    def add(self, ts, j, xs):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.t.append(ts)
        self.j.append(np.full(ts.size, j, dtype=int))
        self.x.append(xs.copy())
        self.count += ts.size

    def mark_jump(self):
        self.jumps.append(self.count)

    def arc(self, labels) -> HybridArc:
        return HybridArc(np.concatenate(self.t), np.concatenate(self.j),
                         np.vstack(self.x), np.asarray(self.jumps, dtype=int), labels=labels)


def solve(
    spec: HybridSystemSpec,
    x0,
    u: Callable | None = None,
    t_max: float = 10.0,
    j_max: int = 10**9,
    step: float = DEFAULT_STEP,
    record_every: int = 1,
    chunk_steps: int = 20000,
) -> HybridArc:
    """Integrate a hybrid system from ``x0``.

    Parameters
    ----------
    spec
        The hybrid system.
    x0
        Initial state; must lie in the flow set or the jump set.
    u
        Optional input signal ``u(t)`` passed to ``flow_field`` (ignored by
        ``flow_block``, which is autonomous).
    t_max, j_max
        Horizon; integration stops at ``t >= t_max`` or ``j >= j_max``.
    step
        RK4 step size.
    record_every
        Store every k-th flow sample (interval end points are always stored).

    Returns
    -------
    HybridArc
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    x = np.array(x0, dtype=float)
    t, j = 0.0, 0
    if not (spec.in_flow_set(x) or spec.in_jump_set(x)):
        raise OutOfSetError("initial state is in neither the flow nor the jump set", t, j)
    uf = u if u is not None else (lambda _t: None)
    rec = _Recorder()
    rec.add(t, j, x[None])

    def check(xs, ts, jj):
        bad = ~np.all(np.isfinite(xs), axis=1)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise DivergenceError("non-finite state", float(ts[k]), jj)
        if spec.state_guard is not None:
            msg = spec.state_guard(xs[-1])
            if msg:
                raise DivergenceError(msg, float(ts[-1]), jj)

    f = None
    if spec.flow_field is not None:
        def f(tt, xx):
            return np.asarray(spec.flow_field(xx, uf(tt), tt), dtype=float)

    eps_t = 1e-12 * max(1.0, t_max)
    while t < t_max - eps_t and j < j_max:
        jumps_here = 0
        while spec.in_jump_set(x) and j < j_max:
            if jumps_here >= spec.zeno_cap:
                raise ZenoError(f"more than {spec.zeno_cap} consecutive jumps", t, j)
            x = np.array(spec.jump_map(x), dtype=float)
            j += 1
            jumps_here += 1
            rec.mark_jump()
            rec.add(t, j, x[None])
            check(x[None], [t], j)
        if j >= j_max:
            break
        if not spec.in_flow_set(x):
            raise OutOfSetError("state left both the flow and the jump set", t, j)

        if spec.guard_clock is not None:
            t, x = _flow_to_guard(spec, f, x, t, j, t_max, step, record_every, chunk_steps, rec, check)
        else:
            t, x = _flow_bisect(spec, f, x, t, j, t_max, step, record_every, rec, check)

    arc = rec.arc(spec.labels)
    if u is not None:
        arc.u = np.array([np.atleast_1d(uf(tt)) for tt in arc.t])
    if spec.diagnostics is not None:
        arc.diagnostics = dict(spec.diagnostics(arc.t, arc.x))
    return arc


def _integrate(spec, f, t, x, h, nsteps, h_last, stride):
    if spec.flow_block is not None:
        return spec.flow_block(t, x, h, nsteps, h_last, stride)
    total = nsteps + (1 if h_last > 0 else 0)
    ts, xs = [], []
    for k in range(total):
        hh = h if k < nsteps else h_last
        x = _rk4_step(f, t, x, hh)
        t = t + hh
        if (k + 1) % stride == 0 or k == total - 1:
            ts.append(t)
            xs.append(x)
    return np.array(ts), np.array(xs).reshape(len(ts), -1)


def _flow_to_guard(spec, f, x, t, j, t_max, h, stride, chunk, rec, check):
    clock = spec.guard_clock
    dt_guard = clock.time_to_guard(x)
    if dt_guard <= _BISECT_TOL * max(1.0, h) and not spec.in_jump_set(x):
        # On the guard but not allowed to jump: the clock gives no progress, so
        # step ordinarily and let the set checks decide what happens next.
        return _flow_bisect(spec, f, x, t, j, t_max, h, stride, rec, check)
    hit_guard = dt_guard <= t_max - t
    duration = dt_guard if hit_guard else t_max - t
    n_full = int(math.floor(duration / h))
    rest = duration - n_full * h
    if rest <= _BISECT_TOL * max(1.0, h):
        rest = 0.0
    total = n_full + (1 if rest > 0.0 else 0)
    if total == 0:
        # Already on the guard up to rounding.
        if hit_guard:
            idx = clock.indices
            x[idx[np.argmax(x[idx])]] = clock.threshold
        return t + duration, x
    t_start = t
    done = 0
    while done < total:
        n = min(chunk, n_full - done)
        last = rest if done + n == n_full else 0.0
        ts, xs = _integrate(spec, f, t_start + done * h, x, h, n, last, stride)
        done += n + (1 if last > 0.0 else 0)
        x = np.array(xs[-1])
        if done == total:
            ts[-1] = t_start + duration
            if hit_guard:
                clock.snap(x)
                xs = np.array(xs)
                xs[-1] = x
        check(xs, ts, j)
        rec.add(ts, j, xs)
    return t_start + duration, x


def _flow_bisect(spec, f, x, t, j, t_max, h, stride, rec, check):
    ts_buf, xs_buf = [], []
    k = 0
    while t < t_max - 1e-12 * max(1.0, t_max):
        hh = min(h, t_max - t)
        ts_new, xs_new = _integrate(spec, f, t, x, hh, 1, 0.0, 1)
        x_new = xs_new[-1]
        if spec.in_jump_set(x_new) or not spec.in_flow_set(x_new):
            lo, hi = 0.0, hh
            x_hi = x_new
            while hi - lo > _BISECT_TOL:
                mid = 0.5 * (lo + hi)
                _, xm = _integrate(spec, f, t, x, mid, 1, 0.0, 1)
                if spec.in_jump_set(xm[-1]) or not spec.in_flow_set(xm[-1]):
                    hi, x_hi = mid, xm[-1]
                else:
                    lo = mid
            t, x = t + hi, np.array(x_hi)
            ts_buf.append(t)
            xs_buf.append(x)
            break
        t, x = t + hh, np.array(x_new)
        k += 1
        if k % stride == 0:
            ts_buf.append(t)
            xs_buf.append(x)
    if not ts_buf or ts_buf[-1] != t:
        ts_buf.append(t)
        xs_buf.append(x)
    ts = np.array(ts_buf)
    xs = np.array(xs_buf)
    check(xs, ts, j)
    rec.add(ts, j, xs)
    return t, x
