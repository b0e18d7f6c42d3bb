import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmcl import experiments as ex
from dmcl.dataset import (
    AgentDataset,
    RecordedSample,
    assemble_U,
    csr_level,
    data_matrix,
    datasets_from_phi,
    disturbance_vector,
    exponential_regressor,
    identification_regressor,
    input_gain_constant,
    load_datasets,
    save_datasets,
    sinusoid_disturbance,
    synthesize_dataset,
    with_recorded_noise,
    zero_disturbance,
)

THETA = np.array([1.0, -2.0, 1.0])


def test_single_sample_outer_product():
    np.testing.assert_array_equal(data_matrix([np.array([1.0, 0, 0])]), np.diag([1.0, 0, 0]))


def test_empty_sample_list_is_zero():
    np.testing.assert_array_equal(data_matrix([], n=3), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        data_matrix([])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        data_matrix([np.ones(2), np.ones(3)])


def test_identification_data_rank_and_psd():
    reg = identification_regressor(2)
    ds = synthesize_dataset(reg, THETA, [0.0, 0.1, 0.2, 0.3, 0.4])
    eig = np.linalg.eigvalsh(ds.data_matrix)
    assert eig[0] >= -1e-12
    assert np.linalg.matrix_rank(ds.data_matrix) <= 3
    # Oracle: term-by-term sum of outer products.
    D = sum(np.outer(reg(t), reg(t)) for t in [0.0, 0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(ds.data_matrix, D, rtol=1e-14)


def test_csr_two_singular_agents():
    alpha, ok = csr_level([np.diag([1.0, 0]), np.diag([0, 1.0])])
    assert alpha == pytest.approx(1.0) and ok


def test_csr_estimation_calibration(cycle_problem):
    alpha, ok = csr_level(cycle_problem.data_matrices)
    assert alpha == pytest.approx(5.5, abs=0.1) and ok


def test_csr_mrac_calibration():
    _, _, datasets = ex.build_mrac(ex.load_config("mrac"))
    alpha, _ = csr_level([d.data_matrix for d in datasets])
    assert alpha == pytest.approx(0.9, abs=0.05)


def test_csr_feedopt_calibration():
    _, _, datasets = ex.build_feedopt(ex.load_config("feedopt"))
    alpha, _ = csr_level([d.data_matrix for d in datasets])
    assert alpha == pytest.approx(0.75, abs=0.05)


def test_synthesize_noise_free_value():
    ds = synthesize_dataset(identification_regressor(1), THETA, [0.0])
    assert ds.samples[0].psi_value == pytest.approx(81.0)


def test_synthesize_constant_noise_shift():
    reg = identification_regressor(3)
    times = [0.0, 0.2, 0.7]
    clean = synthesize_dataset(reg, THETA, times)
    noisy = synthesize_dataset(reg, THETA, times, noise=0.25)
    np.testing.assert_allclose(noisy.psi_vector - clean.psi_vector, 0.25, atol=1e-13)


def test_example1_regressor_values():
    reg = identification_regressor(2)
    np.testing.assert_allclose(reg(0.5), [1.0, 10 * math.exp(-1.0), 100 * math.exp(-2.0)])
    assert reg.sup_bound == pytest.approx(math.sqrt(1 + 100 + 10000))
    assert reg.check_bound(np.linspace(0, 5, 50))


def test_regressor_rejects_negative_rates():
    with pytest.raises(ValueError):
        exponential_regressor([1.0], [-1.0])


def test_assemble_U_zero_input():
    ds = [synthesize_dataset(identification_regressor(i + 1), THETA, [0.0, 0.5]) for i in range(3)]
    regs = [identification_regressor(i + 1) for i in range(3)]
    U = assemble_U(ds, regs, zero_disturbance(3), 0.5, 1.0, 0.3, 0.2)
    np.testing.assert_array_equal(U, 0.0)


def test_assemble_U_single_recorded_noise():
    ds = datasets_from_phi([[[1.0, 0.0]], [[0.0, 1.0]]], [0.0, 0.0], noise=[[1.0], [0.0]])
    dist = sinusoid_disturbance(2, 1.0, recorded_pattern=[[1.0], [0.0]])
    dist = type(dist)(0.0, 1.0, dist.phase, dist.recorded)
    U = assemble_U(ds, [None, None], dist, 1.0, 0.0, 0.3, 0.0)
    np.testing.assert_allclose(U[:2], [0.3, 0.0])


def test_assemble_U_random_vs_oracle(rng):
    N, n = 3, 3
    regs = [identification_regressor(i + 1) for i in range(N)]
    ds = [synthesize_dataset(regs[i], THETA, rng.uniform(0, 1, 4), agent_id=i) for i in range(N)]
    pattern = [rng.standard_normal(4) for _ in range(N)]
    dist = sinusoid_disturbance(N, 0.7, 1.3, pattern)
    tau, k_t, k_c, t = 0.8, 0.4, 0.2, 1.1
    U = assemble_U(ds, regs, dist, tau, k_t, k_c, t)
    oracle = []
    for i in range(N):
        ups = 0.7 * math.sin(1.3 * t + i)
        blk = -2 * tau * k_t * regs[i](t) * ups
        for k, s in enumerate(ds[i].samples):
            blk = blk + k_c * s.phi_value * 0.7 * pattern[i][k]
        oracle.append(blk)
    np.testing.assert_allclose(U, np.concatenate(oracle), rtol=1e-13, atol=1e-13)


def test_input_gain_bound_random_draws(rng):
    """|U| <= 2 tau C |u| for the input the momentum flow sees."""
    N = 3
    regs = [identification_regressor(i + 1) for i in range(N)]
    ds = [synthesize_dataset(regs[i], THETA, rng.uniform(0, 1, 3), agent_id=i) for i in range(N)]
    k_t, k_r = 0.5, 2.0
    phi_bar = max(r.sup_bound for r in regs)
    C = input_gain_constant(ds, phi_bar, k_t, k_r)
    for _ in range(100):
        dist = sinusoid_disturbance(N, rng.uniform(0, 2), 1.0, [rng.standard_normal(3) for _ in range(N)])
        tau, t = rng.uniform(0.1, 3), rng.uniform(0, 5)
        U = assemble_U(ds, regs, dist, tau, k_t, k_r, t, recorded_coef=2 * tau * k_r, realtime_sign=1.0)
        u = disturbance_vector(dist, t, [3] * N)
        assert np.linalg.norm(U) <= 2 * tau * C * np.linalg.norm(u) * (1 + 1e-12) + 1e-12


def test_disturbance_sup_norm_and_bound():
    d = sinusoid_disturbance(4, 0.3, 2.0, [[1.0, -1.0]] * 4)
    ts = np.linspace(0, 20, 400)
    assert max(np.abs(d.realtime(t)).max() for t in ts) <= 0.3 + 1e-15
    assert d.sup_norm() == pytest.approx(math.sqrt(4 * 0.09 + 8 * 0.09))
    assert d.scaled(2.0).amplitude == pytest.approx(0.6)


def test_with_recorded_noise_updates_psi():
    ds = [synthesize_dataset(identification_regressor(1), THETA, [0.0, 1.0])]
    dist = sinusoid_disturbance(1, 0.5, recorded_pattern=[[1.0, -1.0]])
    (out,) = with_recorded_noise(ds, THETA, dist)
    np.testing.assert_allclose(out.psi_vector - ds[0].psi_vector, [0.5, -0.5])
    np.testing.assert_allclose(out.noise_vector, [0.5, -0.5])


def test_dataset_file_round_trip(tmp_path, cycle_problem):
    path = tmp_path / "data.txt"
    save_datasets(cycle_problem.datasets, path)
    back = load_datasets(path, cycle_problem.N)
    for a, b in zip(cycle_problem.datasets, back):
        np.testing.assert_array_equal(a.phi_matrix, b.phi_matrix)
        np.testing.assert_array_equal(a.psi_vector, b.psi_vector)
        assert [s.sample_time for s in a.samples] == [s.sample_time for s in b.samples]


def test_dataset_file_rejects_ragged(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 1 0.0 1 2 3 4 0\n1 2 0.0 1 2 4 0\n")
    with pytest.raises(ValueError):
        load_datasets(path)


# --- properties -----------------------------------------------------------------


@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_data_matrix_psd(n, k, seed):
    rng = np.random.default_rng(seed)
    samples = [RecordedSample(0.0, rng.standard_normal(n) * 10, 0.0) for _ in range(k)]
    D = AgentDataset(0, tuple(samples), n).data_matrix
    np.testing.assert_array_equal(D, D.T)
    assert np.linalg.eigvalsh(D)[0] >= -1e-12 * max(1.0, np.abs(D).max())


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_csr_permutation_invariant(N, seed):
    rng = np.random.default_rng(seed)
    mats = [(lambda b: b @ b.T)(rng.standard_normal((3, 2))) for _ in range(N)]
    perm = rng.permutation(N)
    a1, _ = csr_level(mats)
    a2, _ = csr_level([mats[i] for i in perm])
    assert a1 == pytest.approx(a2, abs=1e-12)
