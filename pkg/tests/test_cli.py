import json

import pytest

from modeswitch.cli import main
from modeswitch.domain import WorkloadFamily as F, read_trace
from modeswitch.profiles import ProfileTable, identity_cell, save_profile
from modeswitch.sim import read_comparison_csv


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "trace.jsonl"
    assert main(["gen-trace", "--balanced", "5", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_gen_trace_balanced_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["gen-trace", "--balanced", "55", "--seed", "42", "--out", str(a)]) == 0
    assert main(["gen-trace", "--balanced", "55", "--seed", "42", "--out", str(b)]) == 0
    assert len(a.read_text().splitlines()) == 605
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads((tmp_path / "a.jsonl.meta.json").read_text())
    assert meta["seed"] == 42 and meta["benchmark_shapes_are_conventions"]


def test_gen_trace_single_family(tmp_path):
    out = tmp_path / "ss.jsonl"
    assert main(["gen-trace", "--family", "SyntheticSS=10", "--jitter", "0", "--out", str(out)]) == 0
    trace = read_trace(out)
    assert len(trace) == 10
    assert {(r.prompt_tokens, r.expected_output_tokens, r.workload_tag) for r in trace} == {(128, 32, F.SYNTHETIC_SS)}


def test_gen_trace_config_errors(tmp_path):
    assert main(["gen-trace", "--out", str(tmp_path / "x.jsonl")]) == 2
    assert main(["gen-trace", "--family", "Nope=3", "--out", str(tmp_path / "x.jsonl")]) == 2


def test_route_static_fp16(trace_file, tmp_path):
    out = tmp_path / "d.jsonl"
    assert main(["route", "--trace", str(trace_file), "--policy", "fp16", "--out", str(out)]) == 0
    lines = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(lines) == 55
    assert {(d["mode"], d["reason"], d["overhead_ms"]) for d in lines} == {("FP16", "Static", 0.0)}
    assert (tmp_path / "d_histogram.csv").read_text().startswith("family,FP16\n")


def test_route_oracle_fp16_only_profile(trace_file, tmp_path):
    prof = tmp_path / "fp16.json"
    save_profile(ProfileTable.from_cells([identity_cell(f) for f in F]), prof)
    out = tmp_path / "d.jsonl"
    rc = main(["route", "--trace", str(trace_file), "--policy", "oracle", "--profile", str(prof), "--out", str(out)])
    assert rc == 0
    reasons = {json.loads(line)["reason"] for line in out.read_text().splitlines()}
    assert reasons == {"OracleFallbackFP16"}


def test_quality_gate_exit_codes(trace_file, tmp_path, capsys):
    base = ["simulate", "--trace", str(trace_file), "--quality-gate", "--fallback"]
    assert main(base + ["--policy", "oracle", "--out", str(tmp_path / "o")]) == 0
    assert main(base + ["--policy", "fp16", "--out", str(tmp_path / "f")]) == 0
    assert main(base + ["--policy", "static:gptq4", "--out", str(tmp_path / "g")]) == 4
    assert "QUALITY GATE FAILED" in capsys.readouterr().err
    assert (tmp_path / "g" / "requests.csv").is_file()


def test_simulate_without_fallback_fails_on_infeasible(trace_file, tmp_path):
    assert main(["simulate", "--trace", str(trace_file), "--policy", "static:INT8PlusContinuousBatching",
                 "--out", str(tmp_path / "x")]) == 3


def test_compare_and_train_pipeline(trace_file, tmp_path):
    ds = tmp_path / "ds.jsonl"
    assert main(["build-dataset", "--trace", str(trace_file), "--out", str(ds)]) == 0
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    for m in (m1, m2):
        assert main(["train", "--dataset", str(ds), "--model", "forest", "--n-trees", "5", "--seed", "3",
                     "--out", str(m)]) == 0
    assert m1.read_bytes() == m2.read_bytes()
    assert (tmp_path / "m1_confusion.csv").is_file()
    out = tmp_path / "cmp"
    rc = main(["compare", "--trace", str(trace_file), "--policies", f"rule,oracle,forest:{m1}", "--out", str(out)])
    assert rc == 0
    rows = read_comparison_csv(out / "comparison.csv")
    assert [r["policy"] for r in rows] == ["rule", "oracle", "forest"]
    assert (out / "confusion_forest.csv").is_file()
    assert (out / "per_family.csv").is_file() and (out / "summary.md").is_file()


def test_error_codes(trace_file, tmp_path):
    bad_cfg = tmp_path / "cfg.json"
    bad_cfg.write_text(json.dumps({"classifier": {"bogus": 1}}))
    assert main(["route", "--trace", str(trace_file), "--policy", "rule", "--config", str(bad_cfg)]) == 2
    assert main(["route", "--trace", str(tmp_path / "missing.jsonl"), "--policy", "rule"]) == 2
    assert main(["route", "--trace", str(trace_file), "--policy", "nonsense"]) == 2
    assert main(["route", "--trace", str(trace_file), "--policy", "tree:" + str(tmp_path / "none.json")]) == 2
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"request_id": "a", "prompt_tokens": -1}\n')
    assert main(["route", "--trace", str(broken), "--policy", "rule", "--out", str(tmp_path / "d.jsonl")]) == 3
    assert main(["train", "--dataset", str(tmp_path / "none.jsonl"), "--model", "tree"]) == 2


def test_energy_command(tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("timestamp_ms,power_w\n0,100\n500,300\n1000,100\n")
    assert main(["energy", "--power-trace", str(p), "--tokens", "80"]) == 0
    assert capsys.readouterr().out.strip() == "2.500000 J/token"
