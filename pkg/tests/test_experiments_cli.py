import json
import math

import numpy as np
import pytest

from dmcl import experiments as ex
from dmcl.cli import EXIT_DATA, EXIT_DIVERGED, EXIT_GRAPH, EXIT_OK, EXIT_VERIFY, main
from dmcl.dataset import save_datasets
from dmcl.graphs import Digraph, save_edge_list
from dmcl.hybrid import HybridArc


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def json_out(text):
    return json.loads(text)


# ---------------------------------------------------------------------------
# configuration handling


def test_presets_load():
    for name in ex.PRESETS:
        cfg = ex.load_config(name)
        assert cfg["name"] == name
        assert "_base" in cfg
    assert ex.load_config("estimation_complete")["graph"]["preset"] == "complete"


def test_load_config_sources(tmp_path):
    cfg = ex.load_config({"params": {"T": 1.0}})
    assert cfg["params"]["T"] == 1.0
    path = tmp_path / "c.yaml"
    path.write_text("params: {T: 2.0}\n")
    assert ex.load_config(path)["params"]["T"] == 2.0
    with pytest.raises(ex.ConfigError):
        ex.load_config("no_such_preset")
    with pytest.raises(ex.ConfigError):
        ex.load_config(tmp_path / "missing.yaml")


def test_set_option_and_overrides():
    cfg = {"params": {"T": 1.0}}
    ex.set_option(cfg, "params.T", "2.5")
    ex.set_option(cfg, "restart.eta", "[1, 0, 1]")
    assert cfg["params"]["T"] == 2.5 and cfg["restart"]["eta"] == [1, 0, 1]
    ex.apply_overrides(cfg, ["horizon.t_max=3", "restart.mode = none"])
    assert cfg["horizon"]["t_max"] == 3 and cfg["restart"]["mode"] == "none"
    with pytest.raises(ex.ConfigError):
        ex.apply_overrides(cfg, ["no_equals_sign"])


def test_bad_blocks_raise_config_error(example1_cfg):
    cfg = ex.load_config(example1_cfg)
    cfg["params"]["T"] = 0.01
    with pytest.raises(ex.ConfigError):
        ex.build_params(cfg)
    with pytest.raises(ex.ConfigError):
        ex.build_graph({"graph": {}})
    with pytest.raises(ex.ConfigError):
        ex.restart_mode({"restart": {"mode": "sometimes"}})
    with pytest.raises(ex.ConfigError):
        ex.sample_times({"design": "bogus"}, 3, np.random.default_rng(0))
    with pytest.raises(ex.ConfigError):
        ex.run({**cfg, "model": "weather"})


def test_sample_time_designs():
    rng = np.random.default_rng(0)
    scaled = ex.sample_times({"design": "scaled", "base_times": [0, 1, 2]}, 3, rng)
    np.testing.assert_allclose(scaled[2], [0, 1 / 3, 2 / 3])
    stag = ex.sample_times({"design": "staggered", "offset": 0.5, "spacing": 0.1, "count": 2}, 3, rng)
    np.testing.assert_allclose(stag[1], [0.5, 0.6])
    rand = ex.sample_times({"design": "random", "count": 4, "t_max": 2.0}, 2, rng)
    assert all(len(r) == 4 and np.all(np.diff(r) >= 0) and r.max() <= 2.0 for r in rand)


def test_estimation_preset_calibration(cycle_problem, cycle_cert):
    assert cycle_cert.alpha == pytest.approx(5.5, abs=0.1)
    assert cycle_cert.contains(cycle_problem.params.T)


def test_disturbance_family_scales(estimation_cfg, cycle_problem):
    cfg = ex.load_config("estimation_complete")
    fam = ex.disturbance_family(cfg, cycle_problem.datasets)
    d1, d2 = fam(1e-3), fam(2e-3)
    assert d2.sup_norm() == pytest.approx(2 * d1.sup_norm())
    np.testing.assert_allclose(d1.recorded[0], 1e-3 * (-1.0) ** np.arange(len(cycle_problem.datasets[0])))


# ---------------------------------------------------------------------------
# analyze


def test_analyze_cycle_report(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--config", "estimation")
    assert code == EXIT_OK
    rep = json_out(out)
    assert rep["sigma_omega_sq_unit_kc"] == pytest.approx(0.18, abs=0.005)
    assert rep["verdict"] == "inside window" and rep["window_feasible"]
    assert rep["T_lower"] < rep["T"] < rep["T_upper"]
    assert 0 < rep["mu_T"] < 1


def test_analyze_verdict_outside(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--config", "estimation", "--T", "5.0")
    assert code == EXIT_OK and json_out(out)["verdict"] == "outside window"


def test_analyze_symmetric_graph_has_infinite_upper(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--config", "estimation_complete")
    rep = json_out(out)
    assert code == EXIT_OK and rep["T_upper_infinite"] and rep["T_upper"] == "inf"


def test_analyze_disconnected_graph(capsys, tmp_path):
    path = tmp_path / "g.txt"
    save_edge_list(Digraph.from_edges(3, [(0, 1), (1, 0), (2, 0)]), path)
    code, _, err = run_cli(capsys, "analyze", "--config", "example1", "--graph", path)
    assert code == EXIT_GRAPH and "graph error" in err


def test_analyze_poor_data(capsys):
    code, _, err = run_cli(capsys, "analyze", "--config", "example1", "--set",
                           "data.synthesize.base_times=[0.0]")
    assert code == EXIT_DATA and "data-richness" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "analyze", "--config", tmp_path / "none.yaml")
    assert code == EXIT_VERIFY and "config error" in err


def test_graph_and_data_files(capsys, tmp_path, example1_problem):
    gpath, dpath = tmp_path / "g.txt", tmp_path / "d.txt"
    save_edge_list(example1_problem.graph, gpath)
    save_datasets(example1_problem.datasets, dpath)
    code, out, _ = run_cli(capsys, "analyze", "--config", "example1", "--graph", gpath, "--data", dpath)
    _, ref, _ = run_cli(capsys, "analyze", "--config", "example1")
    assert code == EXIT_OK
    assert json_out(out)["T_lower"] == pytest.approx(json_out(ref)["T_lower"], rel=1e-10)


# ---------------------------------------------------------------------------
# simulate


def test_simulate_no_restart_diverges(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--config", "example1")
    s = json_out(out)
    assert code == EXIT_DIVERGED and s["diverged"] and s["growth_factor"] >= 1e3


def test_simulate_restart_converges_and_writes_csv(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "simulate", "--config", "example1", "--set", "restart.mode=centralized",
                           "--out-dir", tmp_path)
    s = json_out(out)
    assert code == EXIT_OK and s["theta_error_final"] <= 1e-6 and s["jumps"] > 0
    arc = HybridArc.from_csv(s["csv"])
    arc.validate()
    assert arc.n_jumps == s["jumps"]
    assert "theta_0_0" in arc.labels and "diag_theta_error" in open(s["csv"]).readline()
    assert (tmp_path / "summary.json").exists()


def test_simulate_is_deterministic(capsys, tmp_path):
    args = ["simulate", "--config", "estimation", "--seed", "7", "--set", "horizon.t_max=3",
            "--set", "data.synthesize.noise=0.01"]
    run_cli(capsys, *args, "--out-dir", tmp_path / "a")
    run_cli(capsys, *args, "--out-dir", tmp_path / "b")
    a = (tmp_path / "a" / "estimation.csv").read_bytes()
    b = (tmp_path / "b" / "estimation.csv").read_bytes()
    assert a == b and len(a) > 1000


def test_simulate_decentralized_reports_sync(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--config", "example1", "--set", "restart.mode=decentralized",
                           "--set", "initial.tau0=[0.1, 0.5, 0.7]", "--set", "horizon.t_max=10")
    s = json_out(out)
    assert code == EXIT_OK
    assert s["sync_time"] < 2 * (0.767 - 0.1) / 0.5 and s["sync_jump"] <= 6


# ---------------------------------------------------------------------------
# verify


def test_verify_algebraic_passes(capsys):
    code, out, _ = run_cli(capsys, "verify", "--config", "estimation", "--suite", "algebraic")
    rep = json_out(out)
    assert code == EXIT_OK and rep["passed"]
    assert {c["name"] for c in rep["checks"]} >= {"reset_identity", "block_triangular_bound"}


def test_verify_lyapunov_in_window(capsys):
    code, out, _ = run_cli(capsys, "verify", "--config", "estimation", "--suite", "lyapunov", "--trials", "100")
    assert code == EXIT_OK and json_out(out)["passed"]


def test_verify_beyond_upper_fails(capsys):
    code, out, err = run_cli(capsys, "verify", "--config", "estimation", "--suite", "lyapunov",
                             "--trials", "50", "--set", "params.T=3.5")
    rep = json_out(out)
    assert code == EXIT_VERIFY and "vw_margin" in rep["failed"] and "vw_margin" in err
    vw = next(c for c in rep["checks"] if c["name"] == "vw_margin")
    assert vw["applicable"] is False


# ---------------------------------------------------------------------------
# reproduce and sweep


def test_reproduce_mrac_writes_both_modes(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "reproduce", "mrac", "--out-dir", tmp_path)
    rep = json_out(out)
    assert code == EXIT_OK and set(rep) == {"decentralized", "centralized"}
    for mode in rep:
        arc = HybridArc.from_csv(tmp_path / f"mrac_{mode}.csv")
        assert arc.n_jumps == rep[mode]["jumps"]
        assert "chi_r_0" in arc.labels


def test_sweep_parallel_matches_serial(capsys):
    base = ["sweep", "--config", "example1", "--set", "restart.mode=centralized",
            "--set", "horizon.t_max=5", "--values", "0.727,0.767", "0.806"]
    code1, out1, _ = run_cli(capsys, *base)
    code2, out2, _ = run_cli(capsys, *base, "--jobs", "2")
    assert code1 == code2 == EXIT_OK
    r1, r2 = json_out(out1)["rows"], json_out(out2)["rows"]
    assert [r["value"] for r in r1] == [0.727, 0.767, 0.806]
    for a, b in zip(r1, r2):
        assert a["theta_error_final"] == b["theta_error_final"] and a["jumps"] == b["jumps"]


def test_sweep_flags_divergence(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--config", "example1", "--values", "0.767")
    rows = json_out(out)["rows"]
    assert code == EXIT_DIVERGED and rows[0]["diverged"]


def test_run_result_inf_serialises(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--config", "example1", "--set", "restart.mode=centralized",
                           "--set", "horizon.t_max=0.5")
    s = json_out(out)
    assert code == EXIT_OK
    assert all(not isinstance(v, float) or math.isfinite(v) for v in s.values())


def test_verify_iss_on_cycle(capsys):
    code, out, _ = run_cli(capsys, "verify", "--config", "estimation", "--suite", "iss")
    rep = json_out(out)
    assert code == EXIT_OK and rep["passed"]
    errors = next(c for c in rep["checks"] if c["name"] == "iss_monotone")["detail"]["errors"]
    assert errors[1] > errors[0]  # the disturbance actually reaches the learner


def test_console_script_exit_codes(tmp_path):
    import shutil
    import subprocess

    exe = shutil.which("dmcl")
    if exe is None:
        pytest.skip("console script not installed")
    ok = subprocess.run([exe, "analyze", "--config", "example1"], capture_output=True, text=True)
    assert ok.returncode == EXIT_OK and json.loads(ok.stdout)["window_feasible"]
    bad = subprocess.run([exe, "simulate", "--config", "example1"], capture_output=True, text=True)
    assert bad.returncode == EXIT_DIVERGED
