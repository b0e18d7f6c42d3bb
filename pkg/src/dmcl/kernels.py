"""Hot loops: DMCL flow fields and fixed-step RK4 integrators.

Every model comes in two implementations with identical semantics:

* ``*_nb``: explicit loops compiled with numba (``njit(cache=True)``);
* ``*_np``: vectorised numpy, used when ``DMCL_DISABLE_NUMBA=1`` or on request.

State layout shared by all models (``N`` agents, ``n`` parameters, ``nt``
timers with ``nt`` either 1 for a shared clock or ``N``)::

    x = [theta (N*n), p (N*n), tau (nt), s (1), plant states ...]

The estimator block integrates

    theta_i' = k_a (2 / tau_i) (p_i - theta_i)
    p_i'     = -k_a 2 tau_i (k_t Psi_i + k_r (Delta_i theta_i - b_i) + k_c (L theta)_i)
    tau_i'   = k_a omega,    s' = 1

with ``Psi_i = phi_i(s) (phi_i(s)^T (theta_i - theta*) - amp sin(freq s + phase_i))``
and regressors ``phi_im(s) = coef_im exp(-rate_im s)``.

``fpar`` packs ``[k_r, k_t, k_c, omega, k_a, amp, freq]``; model-specific
scalars follow.
"""

from __future__ import annotations

import numpy as np

from dmcl._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# estimator block


@njit
def dmcl_rhs_nb(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar):
    k_r, k_t, k_c, omega, k_a = fpar[0], fpar[1], fpar[2], fpar[3], fpar[4]
    amp, freq = fpar[5], fpar[6]
    Nn = N * n
    s = x[2 * Nn + nt]
    for i in range(N):
        tau = x[2 * Nn + (i if nt > 1 else 0)]
        off = i * n
        # real-time residual
        res = 0.0
        if k_t != 0.0:
            for m in range(n):
                res += coef[i, m] * np.exp(-rate[i, m] * s) * (x[off + m] - theta_star[m])
            res -= amp * np.sin(freq * s + phase[i])
        for m in range(n):
            g = 0.0
            for l in range(n):
                g += Delta[i, m, l] * x[off + l]
            g = k_r * (g - b[i, m])
            if k_t != 0.0:
                g += k_t * coef[i, m] * np.exp(-rate[i, m] * s) * res
            cons = 0.0
            for j in range(N):
                a = A[i, j]
                if a != 0.0:
                    cons += a * (x[off + m] - x[j * n + m])
            g += k_c * cons
            dx[off + m] = k_a * (2.0 / tau) * (x[Nn + off + m] - x[off + m])
            dx[Nn + off + m] = -k_a * 2.0 * tau * g
    for k in range(nt):
        dx[2 * Nn + k] = k_a * omega
    dx[2 * Nn + nt] = 1.0


def dmcl_rhs_np(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar):
    k_r, k_t, k_c, omega, k_a, amp, freq = fpar[:7]
    Nn = N * n
    theta = x[:Nn].reshape(N, n)
    p = x[Nn:2 * Nn].reshape(N, n)
    tau = np.broadcast_to(x[2 * Nn:2 * Nn + nt], (N,))[:, None]
    s = x[2 * Nn + nt]
    L = np.diag(A.sum(axis=1)) - A
    g = k_r * (np.einsum("iml,il->im", Delta, theta) - b) + k_c * (L @ theta)
    if k_t != 0.0:
        phi = coef * np.exp(-rate * s)
        res = np.einsum("im,im->i", phi, theta - theta_star) - amp * np.sin(freq * s + phase)
        g = g + k_t * phi * res[:, None]
    dx[:Nn] = (k_a * (2.0 / tau) * (p - theta)).ravel()
    dx[Nn:2 * Nn] = (-k_a * 2.0 * tau * g).ravel()
    dx[2 * Nn:2 * Nn + nt] = k_a * omega
    dx[2 * Nn + nt] = 1.0


# ---------------------------------------------------------------------------
# cooperative MRAC: estimator + plant chi_i in R^2 + reference chi_r in R^2
# extra fpar entries: [.., r]; Ai (N,2,2), Bi (N,2), K (2,), Ar (2,2), Br (2,)


@njit
def mrac_rhs_nb(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                Ai, Bi, K, Ar, Br):
    dmcl_rhs_nb(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
    r = fpar[7]
    base = 2 * N * n + nt + 1
    ref = base + 2 * N
    xr0, xr1 = x[ref], x[ref + 1]
    for i in range(N):
        c0 = x[base + 2 * i]
        c1 = x[base + 2 * i + 1]
        f0 = np.sin(c0)
        f1 = abs(c1) * c1
        f2 = np.exp(c0 * c1)
        th = i * n
        ua = f0 * x[th] + f1 * x[th + 1] + f2 * x[th + 2]
        unc = f0 * theta_star[0] + f1 * theta_star[1] + f2 * theta_star[2]
        us = -(K[0] * (c0 - xr0) + K[1] * (c1 - xr1))
        # feed-forward: least-squares solution of B_i u_f = (Ar - A_i) chi_r + Br r
        w0 = (Ar[0, 0] - Ai[i, 0, 0]) * xr0 + (Ar[0, 1] - Ai[i, 0, 1]) * xr1 + Br[0] * r
        w1 = (Ar[1, 0] - Ai[i, 1, 0]) * xr0 + (Ar[1, 1] - Ai[i, 1, 1]) * xr1 + Br[1] * r
        bb = Bi[i, 0] * Bi[i, 0] + Bi[i, 1] * Bi[i, 1]
        uf = (Bi[i, 0] * w0 + Bi[i, 1] * w1) / bb
        u = us + uf - ua
        dx[base + 2 * i] = Ai[i, 0, 0] * c0 + Ai[i, 0, 1] * c1 + Bi[i, 0] * (u + unc)
        dx[base + 2 * i + 1] = Ai[i, 1, 0] * c0 + Ai[i, 1, 1] * c1 + Bi[i, 1] * (u + unc)
    dx[ref] = Ar[0, 0] * xr0 + Ar[0, 1] * xr1 + Br[0] * r
    dx[ref + 1] = Ar[1, 0] * xr0 + Ar[1, 1] * xr1 + Br[1] * r


def mrac_features(chi):
    """Uncertainty regressor ``(sin chi_1, |chi_2| chi_2, exp(chi_1 chi_2))`` row-wise."""
    chi = np.asarray(chi, dtype=float)
    c0, c1 = chi[..., 0], chi[..., 1]
    return np.stack([np.sin(c0), np.abs(c1) * c1, np.exp(c0 * c1)], axis=-1)


def mrac_rhs_np(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                Ai, Bi, K, Ar, Br):
    dmcl_rhs_np(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
    r = fpar[7]
    base = 2 * N * n + nt + 1
    chi = x[base:base + 2 * N].reshape(N, 2)
    chi_r = x[base + 2 * N:base + 2 * N + 2]
    theta = x[:N * n].reshape(N, n)
    phi = mrac_features(chi)
    ua = np.einsum("im,im->i", phi, theta)
    unc = phi @ theta_star
    us = -(chi - chi_r) @ K
    w = np.einsum("ikl,l->ik", Ar[None] - Ai, chi_r) + Br * r
    uf = np.einsum("ik,ik->i", Bi, w) / np.einsum("ik,ik->i", Bi, Bi)
    u = us + uf - ua
    dchi = np.einsum("ikl,il->ik", Ai, chi) + Bi * (u + unc)[:, None]
    dx[base:base + 2 * N] = dchi.ravel()
    dx[base + 2 * N:base + 2 * N + 2] = Ar @ chi_r + Br * r


# ---------------------------------------------------------------------------
# feedback optimisation: estimator + plant chi_i in R^2 + inputs u_i in R^2
# extra fpar entries: [.., eps_u]; a_rate (N,): A_i = -a_i I, b_gain (N,): B_i = b_i I;
# xi (N,2) ball centres, radius (N,)


@njit
def feedopt_rhs_nb(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                   a_rate, b_gain, xi, radius):
    dmcl_rhs_nb(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
    eps_u = fpar[7]
    base = 2 * N * n + nt + 1
    ub = base + 2 * N
    for i in range(N):
        th = i * n
        u0 = x[ub + 2 * i]
        u1 = x[ub + 2 * i + 1]
        g0 = 2.0 * x[th] * u0 + x[th + 1] + x[th + 4] * u1
        g1 = 2.0 * x[th + 2] * u1 + x[th + 3] + x[th + 4] * u0
        z0 = u0 + g0 - xi[i, 0]
        z1 = u1 + g1 - xi[i, 1]
        nz = np.sqrt(z0 * z0 + z1 * z1)
        if nz > radius[i]:
            z0 *= radius[i] / nz
            z1 *= radius[i] / nz
        dx[ub + 2 * i] = eps_u * (xi[i, 0] + z0 - u0)
        dx[ub + 2 * i + 1] = eps_u * (xi[i, 1] + z1 - u1)
        for k in range(2):
            dx[base + 2 * i + k] = a_rate[i] * (-x[base + 2 * i + k]) + b_gain[i] * x[ub + 2 * i + k]


def feedopt_gradient(theta, u):
    """``Dphi(u)^T theta`` for the quadratic basis ``(u1^2, u1, u2^2, u2, u1 u2, 1)``."""
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    g0 = 2.0 * theta[..., 0] * u[..., 0] + theta[..., 1] + theta[..., 4] * u[..., 1]
    g1 = 2.0 * theta[..., 2] * u[..., 1] + theta[..., 3] + theta[..., 4] * u[..., 0]
    return np.stack([g0, g1], axis=-1)


def feedopt_rhs_np(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                   a_rate, b_gain, xi, radius):
    dmcl_rhs_np(t, x, dx, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
    eps_u = fpar[7]
    base = 2 * N * n + nt + 1
    chi = x[base:base + 2 * N].reshape(N, 2)
    u = x[base + 2 * N:base + 4 * N].reshape(N, 2)
    theta = x[:N * n].reshape(N, n)
    z = u + feedopt_gradient(theta, u) - xi
    nz = np.linalg.norm(z, axis=1)
    scale = np.where(nz > radius, radius / np.where(nz > 0, nz, 1.0), 1.0)
    proj = xi + z * scale[:, None]
    dx[base + 2 * N:base + 4 * N] = (eps_u * (proj - u)).ravel()
    dx[base:base + 2 * N] = (-a_rate[:, None] * chi + b_gain[:, None] * u).ravel()


# ---------------------------------------------------------------------------
# RK4 drivers. ``nsteps`` steps of size ``h`` followed by one step of size
# ``h_last`` when ``h_last > 0``; a sample is stored every ``stride`` steps and
# after the final step.


def _n_records(nsteps, h_last, stride):
    total = nsteps + (1 if h_last > 0.0 else 0)
    if total == 0:
        return 0, 0
    return total, (total - 1) // stride + 1


@njit
def _rk4_dmcl_nb(t0, x0, h, nsteps, h_last, stride,
                 N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar):
    total = nsteps + (1 if h_last > 0.0 else 0)
    nrec = 0 if total == 0 else (total - 1) // stride + 1
    d = x0.size
    ts = np.empty(nrec)
    xs = np.empty((nrec, d))
    x = x0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    t = t0
    rec = 0
    for step in range(total):
        hh = h if step < nsteps else h_last
        dmcl_rhs_nb(t, x, k1, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k1[k]
        dmcl_rhs_nb(t + 0.5 * hh, tmp, k2, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k2[k]
        dmcl_rhs_nb(t + 0.5 * hh, tmp, k3, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
        for k in range(d):
            tmp[k] = x[k] + hh * k3[k]
        dmcl_rhs_nb(t + hh, tmp, k4, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar)
        for k in range(d):
            x[k] += hh / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        t = t0 + (step + 1) * h if step < nsteps else t0 + nsteps * h + h_last
        if (step + 1) % stride == 0 or step == total - 1:
            if rec < nrec:
                ts[rec] = t
                xs[rec] = x
                rec += 1
    return ts[:rec], xs[:rec]


@njit
def _rk4_mrac_nb(t0, x0, h, nsteps, h_last, stride,
                 N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar, Ai, Bi, K, Ar, Br):
    total = nsteps + (1 if h_last > 0.0 else 0)
    nrec = 0 if total == 0 else (total - 1) // stride + 1
    d = x0.size
    ts = np.empty(nrec)
    xs = np.empty((nrec, d))
    x = x0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    t = t0
    rec = 0
    for step in range(total):
        hh = h if step < nsteps else h_last
        mrac_rhs_nb(t, x, k1, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar, Ai, Bi, K, Ar, Br)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k1[k]
        mrac_rhs_nb(t + 0.5 * hh, tmp, k2, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                    Ai, Bi, K, Ar, Br)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k2[k]
        mrac_rhs_nb(t + 0.5 * hh, tmp, k3, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                    Ai, Bi, K, Ar, Br)
        for k in range(d):
            tmp[k] = x[k] + hh * k3[k]
        mrac_rhs_nb(t + hh, tmp, k4, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                    Ai, Bi, K, Ar, Br)
        for k in range(d):
            x[k] += hh / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        t = t0 + (step + 1) * h if step < nsteps else t0 + nsteps * h + h_last
        if (step + 1) % stride == 0 or step == total - 1:
            if rec < nrec:
                ts[rec] = t
                xs[rec] = x
                rec += 1
    return ts[:rec], xs[:rec]


@njit
def _rk4_feedopt_nb(t0, x0, h, nsteps, h_last, stride,
                    N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                    a_rate, b_gain, xi, radius):
    total = nsteps + (1 if h_last > 0.0 else 0)
    nrec = 0 if total == 0 else (total - 1) // stride + 1
    d = x0.size
    ts = np.empty(nrec)
    xs = np.empty((nrec, d))
    x = x0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    t = t0
    rec = 0
    for step in range(total):
        hh = h if step < nsteps else h_last
        feedopt_rhs_nb(t, x, k1, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                       a_rate, b_gain, xi, radius)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k1[k]
        feedopt_rhs_nb(t + 0.5 * hh, tmp, k2, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                       a_rate, b_gain, xi, radius)
        for k in range(d):
            tmp[k] = x[k] + 0.5 * hh * k2[k]
        feedopt_rhs_nb(t + 0.5 * hh, tmp, k3, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                       a_rate, b_gain, xi, radius)
        for k in range(d):
            tmp[k] = x[k] + hh * k3[k]
        feedopt_rhs_nb(t + hh, tmp, k4, N, n, nt, A, Delta, b, coef, rate, theta_star, phase, fpar,
                       a_rate, b_gain, xi, radius)
        for k in range(d):
            x[k] += hh / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        t = t0 + (step + 1) * h if step < nsteps else t0 + nsteps * h + h_last
        if (step + 1) % stride == 0 or step == total - 1:
            if rec < nrec:
                ts[rec] = t
                xs[rec] = x
                rec += 1
    return ts[:rec], xs[:rec]


def rk4_np(rhs, t0, x0, h, nsteps, h_last, stride, *args):
    """Generic numpy RK4 driver with the same contract as the compiled ones."""
    total, nrec = _n_records(nsteps, h_last, stride)
    d = x0.size
    ts = np.empty(nrec)
    xs = np.empty((nrec, d))
    x = np.array(x0, dtype=float)
    k1, k2, k3, k4 = (np.empty(d) for _ in range(4))
    t = t0
    rec = 0
    for step in range(total):
        hh = h if step < nsteps else h_last
        rhs(t, x, k1, *args)
        rhs(t + 0.5 * hh, x + 0.5 * hh * k1, k2, *args)
        rhs(t + 0.5 * hh, x + 0.5 * hh * k2, k3, *args)
        rhs(t + hh, x + hh * k3, k4, *args)
        x = x + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (step + 1) * h if step < nsteps else t0 + nsteps * h + h_last
        if (step + 1) % stride == 0 or step == total - 1:
            ts[rec] = t
            xs[rec] = x
            rec += 1
    return ts, xs


# ---------------------------------------------------------------------------
# model registry

_MODELS = {
    "dmcl": (dmcl_rhs_nb, dmcl_rhs_np, _rk4_dmcl_nb),
    "mrac": (mrac_rhs_nb, mrac_rhs_np, _rk4_mrac_nb),
    "feedopt": (feedopt_rhs_nb, feedopt_rhs_np, _rk4_feedopt_nb),
}


class FlowKernel:
    """A compiled flow field bound to its parameter arrays.

    Parameters
    ----------
    model
        One of ``"dmcl"``, ``"mrac"``, ``"feedopt"``.
    args
        Positional parameter tuple following ``(t, x, dx)`` in the rhs signature.
    backend
        ``"numba"``, ``"numpy"`` or ``None`` for the process default.
    """

    def __init__(self, model: str, args: tuple, backend: str | None = None):
        if model not in _MODELS:
            raise ValueError(f"unknown model {model!r}")
        if backend is None:
            backend = "numba" if HAVE_NUMBA else "numpy"
        if backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        self.model = model
        self.backend = backend
        self.args = tuple(self._coerce(a) for a in args)
        self._rhs_nb, self._rhs_np, self._rk4_nb = _MODELS[model]

    @staticmethod
    def _coerce(a):
        if isinstance(a, np.ndarray):
            return np.ascontiguousarray(a, dtype=float)
        if isinstance(a, (bool, np.bool_)):
            return int(a)
        if isinstance(a, (int, np.integer)):
            return int(a)
        return a

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        dx = np.empty_like(x)
        f = self._rhs_nb if self.backend == "numba" else self._rhs_np
        f(float(t), x, dx, *self.args)
        return dx

    def integrate(self, t0: float, x0: np.ndarray, h: float, nsteps: int,
                  h_last: float = 0.0, stride: int = 1):
        """Advance ``nsteps`` RK4 steps of size ``h`` plus a final ``h_last`` step."""
        x0 = np.ascontiguousarray(x0, dtype=float)
        stride = max(1, int(stride))
        if self.backend == "numba":
            return self._rk4_nb(float(t0), x0, float(h), int(nsteps), float(h_last), stride, *self.args)
        return rk4_np(self._rhs_np, float(t0), x0, float(h), int(nsteps), float(h_last), stride, *self.args)

    def with_backend(self, backend: str) -> "FlowKernel":
        return FlowKernel(self.model, self.args, backend)
