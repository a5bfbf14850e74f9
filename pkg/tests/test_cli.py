import csv
import io
import json

import pytest

from agentplan.cli import main


@pytest.fixture
def paths(fixtures_dir):
    return {
        "graph": str(fixtures_dir / "worked_example.agraph"),
        "voice": str(fixtures_dir / "voice_agent.agraph"),
        "profile": str(fixtures_dir / "worked_example_profile.json"),
        "catalog": str(fixtures_dir / "worked_example_catalog.json"),
    }


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


PLAN_ARGS = ("--e2e-ms", "120")


def plan_argv(paths, *extra):
    return ("plan", paths["graph"], "--catalog", paths["catalog"],
            "--profile", paths["profile"], *PLAN_ARGS, *extra)


def test_validate_ok(capsys, paths):
    code, out, err = run(capsys, "validate", paths["voice"])
    assert code == 0 and out.strip() == "ok"


def test_validate_reports_diagnostics(capsys, tmp_path):
    bad = tmp_path / "bad.agraph"
    bad.write_text("graph g {\n  a = compute() { }\n  b = compute(a) { }\n"
                   "  edge b -> a { }\n}\n")
    code, out, err = run(capsys, "validate", str(bad))
    assert code == 1 and err.strip()


def test_missing_file_is_domain_error(capsys):
    code, out, err = run(capsys, "validate", "/no/such/file.agraph")
    assert code == 1 and "error:" in err


def test_lower_runs_passes(capsys, paths):
    code, out, err = run(capsys, "lower", paths["voice"],
                         "--passes", "split_llm,split_tool")
    assert code == 0
    assert "brain.prefill" in out and "search.lookup" in out
    assert "split_llm" in err and "split_tool" in err


def test_lower_unknown_pass(capsys, paths):
    code, out, err = run(capsys, "lower", paths["voice"], "--passes", "explode")
    assert code == 2


def test_lower_json_format(capsys, paths):
    code, out, err = run(capsys, "lower", paths["graph"], "--format", "json")
    assert code == 0
    assert json.loads(out)["name"] == "worked_example"


def test_analyze_hw_csv(capsys):
    code, out, err = run(capsys, "analyze-hw", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["name"] for r in rows} == {"A40", "A100", "Gaudi3", "MI300x",
                                         "H100", "B200"}
    for r in rows:
        float(r["usd_per_hr"]), float(r["usd_per_gbps"])


def test_analyze_hw_json(capsys):
    code, out, err = run(capsys, "analyze-hw", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["basis"] == "capex"
    assert data["hourly_cost_usd"]["H100"] == pytest.approx(0.60)


def test_estimate_json(capsys):
    code, out, err = run(capsys, "estimate", "--model", "llama3-8b-fp16",
                         "--device", "H100", "--isl", "1000", "--osl", "100")
    assert code == 0
    data = json.loads(out)
    assert data["kv_cache_bytes"] == 131_072_000
    assert data["prefill"]["bound"] == "compute"


def test_plan_reproduces_optimal_split(capsys, paths):
    code, out, err = run(capsys, *plan_argv(paths))
    assert code == 0
    plan = json.loads(out)
    assert plan["label"] == "HP::CO"
    assert plan["cost_usd"] == 0.095
    assert plan["predicted"]["e2e_ms"] == 120.0


def test_plan_output_is_byte_deterministic(capsys, paths):
    _, first, _ = run(capsys, *plan_argv(paths))
    _, second, _ = run(capsys, *plan_argv(paths))
    assert first == second


def test_plan_writes_out_file(capsys, paths, tmp_path):
    out_path = tmp_path / "plan.json"
    code, out, err = run(capsys, *plan_argv(paths, "--out", str(out_path)))
    assert code == 0 and out == ""
    assert json.loads(out_path.read_text())["label"] == "HP::CO"


def test_plan_infeasible_sla_is_domain_error(capsys, paths):
    code, out, err = run(capsys, *plan_argv(paths)[:-2], "--e2e-ms", "10")
    assert code == 1 and "error:" in err


def test_tco_sweep_csv(capsys):
    code, out, err = run(capsys, "tco-sweep", "--model", "llama3-70b-fp8",
                         "--isl", "512", "--osl", "4096",
                         "--ttft-ms", "250", "--tbt-ms", "20")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    base = next(r for r in rows if r["label"] == "H100::H100")
    assert float(base["tco_ratio_vs_baseline"]) == 1.0
    feasible = [r for r in rows if r["feasible"] == "1"]
    assert feasible and rows[0]["feasible"] == "1"  # feasible rows sort first


def test_tco_sweep_missing_baseline(capsys):
    code, out, err = run(capsys, "tco-sweep", "--model", "llama3-70b-fp8",
                         "--isl", "512", "--osl", "4096",
                         "--ttft-ms", "250", "--tbt-ms", "20",
                         "--baseline", "NoSuch::H100")
    assert code == 1 and "NoSuch::H100" in err


def test_simulate_round_trip(capsys, paths, tmp_path):
    plan_path = tmp_path / "plan.json"
    run(capsys, *plan_argv(paths, "--out", str(plan_path)))
    code, out, err = run(capsys, "simulate", "--plan", str(plan_path),
                         "--arrivals", "interval:1000", "--duration", "1",
                         "--compare")
    assert code == 0
    report = json.loads(out)
    assert report["completed"] == 1
    assert report["requests"][0]["e2e_ms"] == 120.0
    assert report["comparison"]["e2e_deviation"] == 0.0


def test_catalog_env_var(capsys, paths, monkeypatch):
    monkeypatch.setenv("AGENTPLAN_CATALOG", paths["catalog"])
    code, out, err = run(capsys, "analyze-hw", "--format", "json")
    assert code == 0
    assert set(json.loads(out)["hourly_cost_usd"]) == {"HP", "CO"}


def test_config_file_supplies_defaults(capsys, paths, tmp_path):
    conf = tmp_path / "conf.toml"
    conf.write_text(f'[plan]\ncatalog = "{paths["catalog"]}"\n'
                    f'profile = "{paths["profile"]}"\ne2e-ms = 120.0\n')
    code, out, err = run(capsys, "--config", str(conf), "plan", paths["graph"])
    assert code == 0
    assert json.loads(out)["label"] == "HP::CO"


def test_explicit_flags_beat_config(capsys, paths, tmp_path):
    conf = tmp_path / "conf.toml"
    conf.write_text(f'[plan]\ncatalog = "{paths["catalog"]}"\n'
                    f'profile = "{paths["profile"]}"\ne2e-ms = 200.0\n')
    # 200 ms admits the cheaper all-CO split; the explicit flag restores 120
    code, out, err = run(capsys, "--config", str(conf), "plan", paths["graph"],
                         "--e2e-ms", "120")
    assert code == 0 and json.loads(out)["label"] == "HP::CO"
    code, out, err = run(capsys, "--config", str(conf), "plan", paths["graph"])
    assert code == 0 and json.loads(out)["label"] == "CO::CO"


def test_unknown_flag_is_usage_error(capsys, paths):
    with pytest.raises(SystemExit) as exc:
        main(["plan", paths["graph"], "--frobnicate"])
    assert exc.value.code == 2
