import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmcl.certificates import (
    algebraic_suite,
    block_triangular_sv_bound,
    decomposition_residual,
    flow_decrease_check,
    jump_contraction_trials,
    jump_decrease_check,
    lyapunov_along,
    lyapunov_rate,
    lyapunov_suite,
    lyapunov_value,
    nu_constant,
    q_matrix,
    reset_identity_residual,
    run_checks,
    sandwich_check,
    sandwich_constants,
    spectral_suite,
    vw_margin,
    vw_matrix,
)
from dmcl.core import simulate
from dmcl.graphs import certify, undirected_cycle_graph


def lyapunov_oracle(th, p, tau, Sigma, q, n):
    """Scalar loops over agents for the Q-weighted terms."""
    th = np.asarray(th).reshape(len(q), n)
    p = np.asarray(p).reshape(len(q), n)
    total = 0.0
    for i, qi in enumerate(q):
        total += qi * (np.sum((p[i] - th[i]) ** 2) + np.sum(p[i] ** 2)) / 4.0
    flat = th.ravel()
    quad = sum(flat[a] * Sigma[a, b] * flat[b] for a in range(flat.size) for b in range(flat.size))
    return total + 0.5 * tau**2 * quad


# ---------------------------------------------------------------------------
# Lyapunov function


def test_lyapunov_at_origin_and_momentum_only(cycle_cert):
    cert = cycle_cert
    d = cert.n_agents * cert.n_params
    Q = q_matrix(cert.q, cert.n_params)
    assert lyapunov_value(np.zeros(d), np.zeros(d), 1.0, cert.Sigma, Q) == 0.0
    v = np.linspace(-1, 1, d)
    assert lyapunov_value(np.zeros(d), v, 1.0, cert.Sigma, Q) == pytest.approx(0.5 * v @ Q @ v)


def test_lyapunov_matches_oracle(cycle_cert, rng):
    cert = cycle_cert
    n, d = cert.n_params, cert.n_agents * cert.n_params
    Q = q_matrix(cert.q, n)
    for _ in range(5):
        th, p = rng.normal(size=d), rng.normal(size=d)
        tau = rng.uniform(0.1, 3.0)
        ref = lyapunov_oracle(th, p, tau, cert.Sigma, cert.q, n)
        assert lyapunov_value(th, p, tau, cert.Sigma, Q) == pytest.approx(ref, rel=1e-11)


def test_lyapunov_positive_definite(cycle_cert, rng):
    cert = cycle_cert
    d = cert.n_agents * cert.n_params
    Q = q_matrix(cert.q, cert.n_params)
    for _ in range(200):
        th, p = rng.normal(size=d), rng.normal(size=d)
        assert lyapunov_value(th, p, rng.uniform(0.1, 3), cert.Sigma, Q) > 0


def test_lyapunov_along_arc_matches_pointwise(example1_problem, example1_cert):
    prob = example1_problem.replace_params(T=0.767)
    arc, lay = simulate(prob, t_max=2.0, step=1e-3, record_every=100)
    V = lyapunov_along(arc, lay, prob.theta_star, example1_cert)
    Q = q_matrix(example1_cert.q, 3)
    star = np.tile(prob.theta_star, 3)
    for k in (0, len(arc) // 2, len(arc) - 1):
        x = arc.x[k]
        ref = lyapunov_value(x[lay.theta] - star, x[lay.p] - star, x[lay.tau][0], example1_cert.Sigma, Q)
        assert V[k] == pytest.approx(ref, rel=1e-12)


# ---------------------------------------------------------------------------
# sandwich


def test_sandwich_holds_on_random_states(cycle_cert, cycle_problem):
    prm = cycle_problem.params
    res = sandwich_check(cycle_cert, prm.T0, prm.T, trials=1000, rng=np.random.default_rng(3))
    assert res.passed, res


def test_sandwich_min_branches(cycle_cert):
    cert = cycle_cert
    # A tiny reset value makes the timer term the smaller one.
    c_lo, _ = sandwich_constants(cert, 1e-6, 2.0)
    assert c_lo == pytest.approx(0.5 * cert.sigma_sigma_min * 1e-12)
    big_T0 = math.sqrt(cert.sigma_q_min / cert.sigma_sigma_min)
    c_lo, _ = sandwich_constants(cert, big_T0, 2 * big_T0)
    assert c_lo == pytest.approx(cert.sigma_q_min / 4)


def test_unit_state_lies_in_sandwich(cycle_cert, cycle_problem, rng):
    cert = cycle_cert
    prm = cycle_problem.params
    c_lo, c_hi = sandwich_constants(cert, prm.T0, prm.T)
    d = cert.n_agents * cert.n_params
    x = rng.normal(size=2 * d)
    x /= np.linalg.norm(x)
    V = lyapunov_value(x[:d], x[d:], prm.T, cert.Sigma, q_matrix(cert.q, cert.n_params))
    assert c_lo <= V <= c_hi


# ---------------------------------------------------------------------------
# V_w margin


def test_vw_margin_cycle(cycle_cert, cycle_problem):
    prm = cycle_problem.params
    res = vw_margin(cycle_cert, prm.T, np.linspace(prm.T0, prm.T, 10), np.linspace(0, 10, 10),
                    cycle_problem, prm.omega)
    assert res.applicable and res.passed and res.trials == 100
    assert res.detail["nu"] > 0


def test_vw_symmetric_graph_without_asymmetry(cycle_problem):
    g = undirected_cycle_graph(5)
    cert = certify(g, cycle_problem.data_matrices, 80.0, 0.08, omega=0.7, T0=0.1)
    assert cert.sigma_omega == 0.0
    T = 2.0
    nu0 = cert.sigma_sigma_min * cert.sigma_q_min / (T**2 * cert.sigma_sigma_min + cert.sigma_q_min)
    assert nu_constant(cert, T, omega=0.0) == pytest.approx(nu0)
    for tau in np.linspace(0.1, T, 7):
        lam = np.linalg.eigvalsh(vw_matrix(cert, tau, 0.0))[0]
        assert lam >= nu0 - 1e-9


def test_vw_inapplicable_beyond_upper(cycle_cert, cycle_problem):
    T = cycle_cert.T_upper * 1.01
    assert nu_constant(cycle_cert, T) <= 0
    res = vw_margin(cycle_cert, T, [0.5, 1.0], [0.0], cycle_problem)
    assert not res.applicable and not res.passed


def test_nu_vanishes_at_upper_end(cycle_cert):
    assert nu_constant(cycle_cert, cycle_cert.T_upper) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# flow inequality


def test_lyapunov_rate_matches_finite_difference(cycle_problem, cycle_cert, rng):
    prob = cycle_problem
    x0 = prob.initial_state(theta0=rng.normal(size=(prob.N, prob.n)), tau0=[1.0])
    arc, lay = simulate(prob, t_max=0.5, step=5e-4, x0=x0)
    kern = prob.kernel(1)
    k = len(arc) // 2
    x = arc.x[k]
    dV = lyapunov_rate(x, kern.rhs(arc.t[k], x), lay, prob.theta_star, cycle_cert)
    # The recorded-data modes are stiff, so difference over a tiny RK4 step.
    h = 1e-7
    fwd = np.vstack([x, kern.integrate(arc.t[k], x, h, 1)[1][-1], kern.integrate(arc.t[k], x, -h, 1)[1][-1]])
    V = lyapunov_along(type(arc)(np.zeros(3), np.zeros(3, int), fwd, np.array([], int)), lay,
                       prob.theta_star, cycle_cert)
    assert (V[1] - V[2]) / (2 * h) == pytest.approx(dV, rel=1e-6)


def test_flow_decrease_random_initial_state(cycle_problem, cycle_cert, rng):
    prob = cycle_problem
    x0 = prob.initial_state(theta0=prob.theta_star + rng.normal(size=(prob.N, prob.n)),
                            p0=prob.theta_star + rng.normal(size=(prob.N, prob.n)))
    arc, lay = simulate(prob, t_max=2.5 * prob.params.T, step=5e-4, x0=x0, record_every=10)
    res = flow_decrease_check(arc, lay, prob, cycle_cert)
    assert res.applicable and res.passed, res
    assert res.detail["rho"] > 0 and res.detail["gamma"] > 0
    assert res.detail["fd_rel_err"] < 1e-3


def test_flow_decrease_at_equilibrium(cycle_problem, cycle_cert):
    prob = cycle_problem
    star = np.tile(prob.theta_star, (prob.N, 1))
    arc, lay = simulate(prob, t_max=1.0, step=5e-4, x0=prob.initial_state(theta0=star), record_every=50)
    res = flow_decrease_check(arc, lay, prob, cycle_cert, fd_check=False)
    assert res.passed
    V = lyapunov_along(arc, lay, prob.theta_star, cycle_cert)
    assert np.max(V) < 1e-18


# ---------------------------------------------------------------------------
# jumps


def test_jump_contraction_full_restart(cycle_cert, cycle_problem):
    prm = cycle_problem.params
    res = jump_contraction_trials(cycle_cert, prm.T, prm.T0, 100, np.ones(5, int))
    assert res.name == "jump_contraction" and res.passed
    assert res.detail["max_ratio"] <= cycle_cert.mu(prm.T) + 1e-9


def test_jump_monotone_arbitrary_policy(cycle_cert, cycle_problem):
    prm = cycle_problem.params
    res = jump_contraction_trials(cycle_cert, prm.T, prm.T0, 100, None)
    assert res.name == "jump_monotone" and res.passed
    res0 = jump_contraction_trials(cycle_cert, prm.T, prm.T0, 100, np.zeros(5, int))
    assert res0.passed and res0.detail["max_ratio"] <= 1 + 1e-9


def test_jump_with_zero_estimate_error(cycle_cert, cycle_problem, rng):
    prm = cycle_problem.params
    res = jump_decrease_check(np.zeros(15), rng.normal(size=15), cycle_cert, np.ones(5), prm.T, prm.T0)
    assert res.detail["ratio"] == 0.0


# ---------------------------------------------------------------------------
# algebraic identities


def test_reset_identity_examples(rng):
    th, p = rng.normal(size=6), rng.normal(size=6)
    q = np.array([0.3, 0.5, 0.8])
    for eta in ([0, 0, 0], [1, 1, 1], [1, 0, 1]):
        assert reset_identity_residual(th, p, q, eta) <= 1e-12


@given(st.integers(1, 6), st.integers(1, 4), st.data())
def test_reset_identity_fuzzed(N, n, data):
    vec = arrays(np.float64, N * n, elements=st.floats(-1e3, 1e3))
    th = data.draw(vec)
    p = data.draw(vec)
    q = data.draw(arrays(np.float64, N, elements=st.floats(1e-3, 1.0)))
    eta = data.draw(arrays(np.int64, N, elements=st.integers(0, 1)))
    scale = max(1.0, float(np.max(np.abs(th))), float(np.max(np.abs(p)))) ** 2
    assert reset_identity_residual(th, p, q, eta) <= 1e-10 * scale


def test_block_triangular_examples():
    smin, bound = block_triangular_sv_bound(np.eye(2), np.zeros((2, 2)), np.eye(2))
    assert smin == pytest.approx(1.0) and bound == pytest.approx(1 / math.sqrt(2))
    A, D = np.diag([2.0, 3.0]), np.diag([4.0, 0.5])
    smin, bound = block_triangular_sv_bound(A, np.zeros((2, 2)), D)
    assert bound <= smin == pytest.approx(0.5)
    with pytest.raises(ValueError):
        block_triangular_sv_bound(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2))


def test_block_triangular_random(rng):
    for _ in range(50):
        A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        D = rng.normal(size=(2, 2)) + 3 * np.eye(2)
        B = rng.normal(size=(3, 2))
        smin, bound = block_triangular_sv_bound(A, B, D)
        assert bound <= smin + 1e-12


def test_decomposition_identity(cycle_problem, cycle_cert, rng):
    for _ in range(10):
        th = rng.normal(size=cycle_problem.N * cycle_problem.n)
        assert decomposition_residual(cycle_problem, cycle_cert, th) <= 1e-9


# ---------------------------------------------------------------------------
# suites and reports


def test_algebraic_and_spectral_suites(cycle_problem, cycle_cert):
    checks = algebraic_suite(200, 0, cycle_problem, cycle_cert) + spectral_suite(cycle_problem, cycle_cert)
    report = run_checks("all", checks)
    assert report.passed, report.failed
    parsed = json.loads(report.to_json())
    assert parsed["passed"] and {c["name"] for c in parsed["checks"]} >= {
        "reset_identity", "block_triangular_bound", "decomposition_identity", "perron_left_null", "csr"}


def test_lyapunov_suite_fails_outside_window(cycle_problem, cycle_cert):
    prob = cycle_problem.replace_params(T=cycle_cert.T_lower * 0.9)
    report = run_checks("lyapunov", lyapunov_suite(prob, cycle_cert, trials=20))
    assert not report.passed
    assert "jump_contraction" in report.failed
