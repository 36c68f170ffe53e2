import json
from pathlib import Path

import pytest

from qni_lab import cli, harness
from qni_lab.errors import RejectedInput


def small_identify_scenario():
    sc = harness.default_scenario("identify")
    sc.update({"n_grid": [300], "n_eval": 200, "d": 2, "k": 3,
               "train": {"learning_rate": 0.2, "max_iters": 800, "grad_tol": 1e-7}})
    return sc


def read_rows(path: Path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    return header, lines[1:]


def payloads(jsonl: Path):
    out = []
    for line in jsonl.read_text().strip().splitlines():
        rec = json.loads(line)
        rec.pop("wall_time_ms")
        out.append(rec)
    return out


def test_config_validation(tmp_path):
    with pytest.raises(RejectedInput):
        harness.ExperimentConfig("nope", {}, (0,), tmp_path)
    with pytest.raises(RejectedInput):
        harness.ExperimentConfig("identify", {}, (), tmp_path)
    with pytest.raises(RejectedInput):
        harness.ExperimentConfig("identify", {}, (1, 1), tmp_path)


def test_identify_run_writes_expected_files(tmp_path):
    cfg = harness.ExperimentConfig("identify", small_identify_scenario(), (3, 1), tmp_path)
    assert harness.run(cfg) == 0
    header, rows = read_rows(tmp_path / "identify.csv")
    assert header == ["n", "seed", "shift_id", "emp_loss_q", "sup_gap_sq", "certified_bound", "holds"]
    assert len(rows) == 2
    # rows are sorted by (n, seed) regardless of the seed order given
    assert rows[0].split(",")[1] == "1"
    recs = payloads(tmp_path / "runs.jsonl")
    assert [r["seed"] for r in recs] == [1, 3]
    assert all(r["command"] == "identify" for r in recs)
    assert all(r["scenario_hash"] == recs[0]["scenario_hash"] for r in recs)


def test_identify_rerun_is_byte_identical(tmp_path):
    cfg1 = harness.ExperimentConfig("identify", small_identify_scenario(), (0,), tmp_path / "a")
    cfg2 = harness.ExperimentConfig("identify", small_identify_scenario(), (0,), tmp_path / "b")
    harness.run(cfg1)
    harness.run(cfg2)
    assert (tmp_path / "a/identify.csv").read_bytes() == (tmp_path / "b/identify.csv").read_bytes()
    assert payloads(tmp_path / "a/runs.jsonl") == payloads(tmp_path / "b/runs.jsonl")


def test_parallel_matches_serial(tmp_path):
    sc = small_identify_scenario()
    serial = harness.ExperimentConfig("identify", sc, (0, 1, 2, 4), tmp_path / "s", parallelism=1)
    parallel = harness.ExperimentConfig("identify", sc, (0, 1, 2, 4), tmp_path / "p", parallelism=4)
    harness.run(serial)
    harness.run(parallel)
    assert (tmp_path / "s/identify.csv").read_bytes() == (tmp_path / "p/identify.csv").read_bytes()


def test_bandit_run_trace_schema(tmp_path):
    sc = harness.default_scenario("bandit")
    sc.update({"T": 400, "train": {"learning_rate": 0.15, "max_iters": 800, "grad_tol": 1e-7}})
    cfg = harness.ExperimentConfig("bandit", sc, (5,), tmp_path)
    assert harness.run(cfg) == 0
    header, rows = read_rows(tmp_path / "trace_5.csv")
    assert header == ["t", "phase", "reward", "inst_regret", "cum_regret"]
    assert len(rows) == 400
    phases = {r.split(",")[1] for r in rows}
    assert phases <= {"explore", "commit"}


def test_transfer_run_payload_schema(tmp_path):
    sc = harness.default_scenario("transfer")
    sc.update({"n_p": 1500, "n_g": 15, "d": 4, "k": 5,
               "train": {"learning_rate": 0.15, "max_iters": 1200, "grad_tol": 1e-7}})
    cfg = harness.ExperimentConfig("transfer", sc, (2,), tmp_path)
    assert harness.run(cfg) == 0
    recs = payloads(tmp_path / "runs.jsonl")
    assert set(recs[0]["payload"]) == {"n_p", "n_g", "B", "B_hat", "eps_p", "eps_g",
                                       "proxy_sup_gap", "gold_sup_gap", "certified", "holds", "seed"}


def test_modules_run_csv_schema(tmp_path):
    sc = harness.default_scenario("modules")
    sc.update({"n_mc": 60, "n_train": 150, "n_parser_words": 80,
               "train": {"learning_rate": 0.15, "max_iters": 600, "grad_tol": 1e-6}})
    cfg = harness.ExperimentConfig("modules", sc, (4,), tmp_path)
    assert harness.run(cfg) == 0
    header, rows = read_rows(tmp_path / "modules_4.csv")
    assert header == ["word_id", "parse_match", "gap_l2", "bound", "within_bound"]
    assert len(rows) == 60


def test_verify_suite_passes_and_prints(tmp_path, capsys):
    cfg = harness.ExperimentConfig("verify", {"scale": 0.2}, (0,), tmp_path)
    status = harness.run(cfg)
    out = capsys.readouterr().out
    assert status == 0
    lines = [l for l in out.splitlines() if l.startswith("[")]
    assert len(lines) == 10
    assert all(l.startswith("[PASS]") for l in lines)
    names = {l.split("] ", 1)[1] for l in lines}
    assert names == {
        "strong-convexity-mc", "loss-lipschitz-pairs", "deviation-monotonicity",
        "identification-dominance", "smooth-best-arm", "orthogonal-alignment",
        "worst-case-sequence-shift", "mixture-shift-linearity",
        "parser-sequence-error", "composition-error-bound",
    }


def test_sweep_identify_axis(tmp_path):
    sc = {"axis": "n", "grid": [200, 400, 800], "base": small_identify_scenario()}
    sc["base"]["xi_max"] = 0.1
    sc["base"]["noise_kind"] = "uniform"
    cfg = harness.ExperimentConfig("sweep", sc, (0, 1), tmp_path)
    assert harness.run(cfg) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["axis"] == "n"
    assert summary["grid"] == [200, 400, 800]
    assert len(summary["medians"]) == 3
    assert summary["slope"] is not None
    header, rows = read_rows(tmp_path / "sweep.csv")
    assert len(rows) == 6


def test_sweep_rejects_bad_grid(tmp_path):
    sc = {"axis": "n", "grid": [400, 200], "base": small_identify_scenario()}
    cfg = harness.ExperimentConfig("sweep", sc, (0,), tmp_path)
    with pytest.raises(RejectedInput):
        harness.run(cfg)


def test_sweep_transfer_axis(tmp_path):
    base = harness.default_scenario("transfer")
    base.update({"d": 4, "k": 5, "n_p": 1200,
                 "train": {"learning_rate": 0.2, "max_iters": 800, "grad_tol": 1e-7}})
    sc = {"axis": "n_g", "grid": [10, 20, 40], "base": base}
    cfg = harness.ExperimentConfig("sweep", sc, (0,), tmp_path)
    assert harness.run(cfg) == 0
    header, rows = read_rows(tmp_path / "sweep.csv")
    assert set(header) >= {"n_g", "seed", "gold_sup_gap", "certified", "holds"}
    assert len(rows) == 3


def test_sweep_module_axis_stays_within_bound(tmp_path):
    base = harness.default_scenario("modules")
    base.update({"n_mc": 150, "n_train": 250, "n_parser_words": 120, "alpha_shift": 0.01,
                 "train": {"learning_rate": 0.15, "max_iters": 800, "grad_tol": 1e-7}})
    sc = {"axis": "T_modules", "grid": [2, 4, 8], "base": base}
    cfg = harness.ExperimentConfig("sweep", sc, (0, 1), tmp_path)
    assert harness.run(cfg) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    # contractive quadratic modules drive iterates toward the origin, where
    # fitted and true nets coincide, so the matched gap shrinks with depth;
    # the depth-linear certified bound dominates it at every grid point
    assert all(m > 0 for m in summary["medians"])
    header, rows = read_rows(tmp_path / "sweep.csv")
    freq_col = header.index("freq_within")
    assert all(float(r.split(",")[freq_col]) == 1.0 for r in rows)


def test_identify_require_holds_flag(tmp_path):
    sc = small_identify_scenario()
    sc["require_holds"] = True
    cfg = harness.ExperimentConfig("identify", sc, (0,), tmp_path)
    assert harness.run(cfg) == 0


def test_verify_exit_code_names_failed_check(tmp_path, capsys, monkeypatch):
    def broken_check(scale, seed):
        return harness.CheckResult("always-broken", False, {"reason": "stub"})

    monkeypatch.setattr(harness, "VERIFY_CHECKS", [harness._check_deviation_monotonic, broken_check])
    cfg = harness.ExperimentConfig("verify", {"scale": 0.1}, (0,), tmp_path)
    status = harness.run(cfg)
    out = capsys.readouterr().out
    assert status == 1
    assert "[FAIL] always-broken" in out
    assert "violated checks: always-broken" in out


def test_scenario_hash_stable_and_sensitive():
    a = harness.scenario_hash({"x": 1, "y": [1, 2]})
    b = harness.scenario_hash({"y": [1, 2], "x": 1})
    c = harness.scenario_hash({"x": 2, "y": [1, 2]})
    assert a == b
    assert a != c


# ---------------------------------------------------------------------------
# CLI surface


def test_cli_missing_scenario_exits_2(tmp_path, capsys):
    status = cli.main(["identify", "--scenario", str(tmp_path / "absent.json"), "--out", str(tmp_path)])
    assert status == 2
    assert "absent.json" in capsys.readouterr().err


def test_cli_bad_json_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    status = cli.main(["identify", "--scenario", str(bad), "--out", str(tmp_path)])
    assert status == 2


def test_cli_unknown_command_exits_2():
    with pytest.raises(SystemExit) as err:
        cli.main(["frobnicate"])
    assert err.value.code == 2


def test_cli_runs_scenario_file_and_env_override(tmp_path, monkeypatch):
    scenario_path = tmp_path / "scenario.json"
    scenario_path.write_text(json.dumps(small_identify_scenario()))
    out_env = tmp_path / "env_out"
    monkeypatch.setenv("QNI_LAB_OUT", str(out_env))
    status = cli.main(["identify", "--scenario", str(scenario_path),
                       "--seeds", "0", "--out", str(tmp_path / "ignored")])
    assert status == 0
    assert (out_env / "identify.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_cli_bad_seeds_exit_2(tmp_path, capsys):
    status = cli.main(["identify", "--seeds", "1,zap", "--out", str(tmp_path)])
    assert status == 2
