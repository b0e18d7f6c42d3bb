import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmcl.hybrid import (
    DivergenceError,
    GuardClock,
    HybridArc,
    HybridSystemSpec,
    HybridTime,
    OutOfSetError,
    ZenoError,
    guard_time,
    solve,
)


def timer_system(omega, T0, T, use_clock=True):
    return HybridSystemSpec(
        flow_field=lambda x, u, t: np.array([omega]),
        jump_map=lambda x: np.array([T0]),
        in_flow_set=lambda x: T0 - 1e-9 <= x[0] <= T + 1e-9,
        in_jump_set=lambda x: x[0] >= T - 1e-9,
        guard_clock=GuardClock(0, omega, T) if use_clock else None,
    )


def test_constant_arc_without_jumps():
    spec = HybridSystemSpec(lambda x, u, t: np.zeros(1), lambda x: x, lambda x: True, lambda x: False)
    arc = solve(spec, [3.0], t_max=2.0, step=0.1)
    assert np.all(arc.x == 3.0)
    assert np.all(arc.j == 0)
    assert arc.t[-1] == pytest.approx(2.0)


@pytest.mark.parametrize("use_clock", [True, False])
@pytest.mark.parametrize("omega, T0, T, tau0, t_max", [
    (0.5, 0.1, 1.1, 0.1, 10.3),
    (0.9, 0.2, 0.7, 0.5, 7.3),
    (0.3, 1.0, 2.0, 1.99, 13.0),
])
def test_timer_jump_count_closed_form(use_clock, omega, T0, T, tau0, t_max):
    arc = solve(timer_system(omega, T0, T, use_clock), [tau0], t_max=t_max, step=1e-2)
    expected = math.floor((omega * t_max - (T - tau0)) / (T - T0)) + 1
    assert arc.n_jumps == expected
    arc.validate()
    # Event times: first at (T - tau0)/omega, then every (T - T0)/omega.
    jt = arc.t[arc.jump_indices]
    ref = (T - tau0) / omega + np.arange(expected) * (T - T0) / omega
    np.testing.assert_allclose(jt, ref, atol=1e-9 if use_clock else 1e-8)


def test_jump_exactly_at_horizon_is_not_taken():
    arc = solve(timer_system(0.5, 0.1, 1.1), [0.1], t_max=10.0, step=1e-2)
    assert arc.n_jumps == 4
    assert arc.x[-1, 0] == pytest.approx(1.1)


def test_linear_flow_matches_exponential():
    spec = HybridSystemSpec(
        flow_field=lambda x, u, t: -x,
        jump_map=lambda x: x,
        in_flow_set=lambda x: True,
        in_jump_set=lambda x: False,
    )
    arc = solve(spec, [2.0, -1.0], t_max=3.0, step=1e-3)
    np.testing.assert_allclose(arc.x, np.exp(-arc.t)[:, None] * [2.0, -1.0], atol=1e-8)


def test_identity_jumps_preserve_exponential():
    # x' = -x with a timer coordinate that triggers identity jumps on x.
    spec = HybridSystemSpec(
        flow_field=lambda x, u, t: np.array([-x[0], 1.0]),
        jump_map=lambda x: np.array([x[0], 0.0]),
        in_flow_set=lambda x: x[1] <= 0.3 + 1e-9,
        in_jump_set=lambda x: x[1] >= 0.3 - 1e-12,
        guard_clock=GuardClock(1, 1.0, 0.3),
    )
    arc = solve(spec, [1.0, 0.0], t_max=2.0, step=1e-3)
    assert arc.n_jumps == 6
    np.testing.assert_allclose(arc.x[:, 0], np.exp(-arc.t), atol=1e-8)


def test_guard_time_examples():
    assert guard_time(2.0, 0.3, 2.0) == 0.0
    assert guard_time(0.1, 0.5, 1.1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        guard_time(0.0, 0.0, 1.0)


@given(st.floats(0.0, 5.0), st.floats(0.05, 0.99), st.floats(0.01, 5.0))
def test_guard_time_lands_on_threshold(tau, omega, gap):
    T = tau + gap
    dt = guard_time(tau, omega, T)
    spec = HybridSystemSpec(lambda x, u, t: np.array([omega]), lambda x: x,
                            lambda x: True, lambda x: False)
    arc = solve(spec, [tau], t_max=dt, step=max(dt / 37.0, 1e-6))
    assert abs(arc.x[-1, 0] - T) <= 1e-12 * max(1.0, T)


def test_zeno_cap_raises():
    spec = HybridSystemSpec(lambda x, u, t: np.zeros(1), lambda x: x,
                            lambda x: True, lambda x: True, zeno_cap=4)
    with pytest.raises(ZenoError) as info:
        solve(spec, [0.0], t_max=1.0)
    assert info.value.t == 0.0 and info.value.j == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_raises():
    spec = HybridSystemSpec(lambda x, u, t: x**2, lambda x: x, lambda x: True, lambda x: False)
    with pytest.raises(DivergenceError) as info:
        solve(spec, [1.0], t_max=2.0, step=1e-2)
    assert info.value.t <= 1.05


def test_escape_guard():
    spec = HybridSystemSpec(lambda x, u, t: x, lambda x: x, lambda x: True, lambda x: False,
                            state_guard=lambda x: "escape" if abs(x[0]) > 10 else None)
    with pytest.raises(DivergenceError, match="escape"):
        solve(spec, [1.0], t_max=10.0, step=1e-2)


def test_initial_state_outside_sets():
    spec = HybridSystemSpec(lambda x, u, t: x, lambda x: x, lambda x: x[0] < 1, lambda x: False)
    with pytest.raises(OutOfSetError):
        solve(spec, [2.0], t_max=1.0)


def test_leaving_both_sets_raises():
    # Flow pushes x past the flow-set boundary, and the jump set is empty.
    spec = HybridSystemSpec(lambda x, u, t: np.ones(1), lambda x: x, lambda x: x[0] <= 1.0,
                            lambda x: False, guard_clock=GuardClock(0, 1.0, 1.0))
    with pytest.raises(OutOfSetError):
        solve(spec, [0.0], t_max=3.0, step=0.1)


def test_input_signal_is_recorded():
    spec = HybridSystemSpec(lambda x, u, t: np.array([u]), lambda x: x, lambda x: True, lambda x: False)
    arc = solve(spec, [0.0], u=lambda t: math.cos(t), t_max=1.0, step=1e-3)
    assert arc.x[-1, 0] == pytest.approx(math.sin(1.0), abs=1e-10)
    np.testing.assert_allclose(arc.u[:, 0], np.cos(arc.t))


def test_j_max_stops_integration():
    arc = solve(timer_system(0.5, 0.1, 1.1), [0.1], t_max=100.0, j_max=3)
    assert arc.n_jumps == 3
    assert arc.t[-1] == pytest.approx(3 * 2.0)


def test_arc_structure_and_csv_round_trip(tmp_path):
    arc = solve(timer_system(0.5, 0.1, 1.1), [0.1], t_max=5.0, step=1e-2, record_every=5)
    arc.validate()
    # Jumps produce two rows at equal t.
    for k in arc.jump_indices:
        assert arc.t[k] == arc.t[k - 1] and arc.j[k] == arc.j[k - 1] + 1
    arc.diagnostics = {"double": 2 * arc.x[:, 0]}
    path = tmp_path / "arc.csv"
    arc.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["t", "j", "state_0", "diag_double"]
    back = HybridArc.from_csv(path)
    np.testing.assert_array_equal(back.t, arc.t)
    np.testing.assert_array_equal(back.j, arc.j)
    np.testing.assert_array_equal(back.x, arc.x)
    np.testing.assert_array_equal(back.jump_indices, arc.jump_indices)
    np.testing.assert_array_equal(back.diagnostics["double"], arc.diagnostics["double"])


def test_validate_detects_bad_domain():
    arc = HybridArc(np.array([0.0, 0.5, 0.4]), np.array([0, 0, 0]), np.zeros((3, 1)), np.array([], int))
    with pytest.raises(AssertionError):
        arc.validate()


def test_hybrid_time_ordering():
    assert HybridTime(1.0, 0) < HybridTime(1.0, 1) < HybridTime(2.0, 0)


def test_determinism():
    spec = HybridSystemSpec(lambda x, u, t: np.array([x[1], -x[0]]), lambda x: x,
                            lambda x: True, lambda x: False)
    a = solve(spec, [1.0, 0.0], t_max=3.0, step=1e-2)
    b = solve(spec, [1.0, 0.0], t_max=3.0, step=1e-2)
    assert a.t.tobytes() == b.t.tobytes() and a.x.tobytes() == b.x.tobytes()


def test_rk4_convergence_order():
    spec = HybridSystemSpec(lambda x, u, t: np.array([x[1], -x[0] - 0.1 * x[1]]), lambda x: x,
                            lambda x: True, lambda x: False)
    exact = solve(spec, [1.0, 0.0], t_max=4.0, step=1e-4).x[-1]
    errs = [np.linalg.norm(solve(spec, [1.0, 0.0], t_max=4.0, step=h).x[-1] - exact) for h in (0.1, 0.05)]
    assert math.log2(errs[0] / errs[1]) >= 3.5
