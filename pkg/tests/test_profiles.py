import json
from types import SimpleNamespace

import pytest

from modeswitch.domain import BENCHMARK_FAMILIES, InferenceMode as M, RequestDescriptor, WorkloadFamily as F
from modeswitch.profiles import (
    BaselineCostModel,
    MissingCellError,
    ProfileError,
    Provenance,
    default_profile_path,
    fp16_latency,
    identity_cell,
    load_profile,
    lookup,
    profile_from_dict,
    save_profile,
)
from modeswitch.workload import NOMINAL_SHAPES


def test_default_profile_table1_cell(profile):
    cell = lookup(profile, M.GPTQ4, F.SYNTHETIC_SS)
    assert (cell.latency_speedup, cell.energy_ratio) == (2.56, 0.46)
    assert cell.provenance is Provenance.PAPER_MEASURED


def test_default_profile_int8_mmlu(profile):
    cell = lookup(profile, M.INT8, F.MMLU_PRO)
    assert (cell.latency_speedup, cell.energy_ratio, cell.quality_delta_pp) == (1.14, 0.82, 2.0)


def test_lookup_examples(profile):
    fp16 = lookup(profile, M.FP16, F.GSM8K)
    assert (fp16.latency_speedup, fp16.quality_delta_pp) == (1.0, 0.0)
    gptq = lookup(profile, M.GPTQ4, F.GSM8K)
    assert (gptq.latency_speedup, gptq.energy_ratio, gptq.quality_delta_pp) == (2.87, 0.39, -4.0)
    with pytest.raises(MissingCellError):
        lookup(profile, M.CUDA_GRAPHS, F.GPQA)


def test_shipped_file_omits_screening_modes_for_benchmarks():
    data = json.loads(default_profile_path().read_text())
    keys = {(c["mode"], c["family"]) for c in data["cells"]}
    for family in BENCHMARK_FAMILIES:
        for mode in (M.CUDA_GRAPHS, M.AWQ4, M.CHUNKED_PREFILL, M.KV_COMPRESSION):
            assert (mode.value, family.value) not in keys


def test_fp16_identity_for_every_family(profile):
    for family in profile.families:
        assert lookup(profile, M.FP16, family) == identity_cell(family)


def test_table2_deltas(profile):
    # accuracy(mode) - accuracy(FP16), in points
    expected = {
        M.GPTQ4: (-4.0, -4.0, 0.0, 7.0, -8.0),
        M.INT8: (2.0, 4.0, 3.0, -4.0, 1.0),
        M.SPECULATIVE: (0.0, -1.0, 0.0, 0.0, 0.0),
        M.PREFIX_CACHING: (0.0, -1.0, 0.0, 1.0, 0.0),
    }
    for mode, deltas in expected.items():
        for family, delta in zip(BENCHMARK_FAMILIES, deltas):
            assert lookup(profile, mode, family).quality_delta_pp == pytest.approx(delta, abs=1e-9)


def test_rouge_scaled_deltas(profile):
    assert lookup(profile, M.GPTQ4, F.SYNTHETIC_SS).quality_delta_pp == pytest.approx(-0.4)
    assert lookup(profile, M.GPTQ4, F.SYNTHETIC_LS).quality_delta_pp == pytest.approx(-8.6)
    assert lookup(profile, M.GPTQ4, F.MEMORY_PRESSURE).quality_delta_pp == pytest.approx(-15.9)


def test_unreported_cells_are_flagged(profile):
    cell = lookup(profile, M.SPECULATIVE, F.SYNTHETIC_SL)
    assert cell.provenance is Provenance.SYNTHESIZED
    assert (cell.latency_speedup, cell.energy_ratio, cell.memory_ratio) == (1.0, 1.0, 1.0)


def test_memory_ratios_default_to_one(profile):
    assert all(c.memory_ratio == 1.0 for c in profile.cells.values())


def _raw(profile):
    return json.loads(json.dumps(profile.to_dict()))


def test_fp16_identity_violation_rejected(profile):
    raw = _raw(profile)
    for c in raw["cells"]:
        if c["mode"] == "FP16" and c["family"] == "SyntheticSS":
            c["latency_speedup"] = 1.2
    with pytest.raises(ProfileError, match="FP16.*SyntheticSS"):
        profile_from_dict(raw)


def test_missing_fp16_row_rejected(profile):
    raw = _raw(profile)
    raw["cells"] = [c for c in raw["cells"] if not (c["mode"] == "FP16" and c["family"] == "GPQA")]
    with pytest.raises(ProfileError, match="missing FP16"):
        profile_from_dict(raw)


@pytest.mark.parametrize("field", ["latency_speedup", "energy_ratio", "memory_ratio"])
def test_nonpositive_ratio_rejected(profile, field):
    raw = _raw(profile)
    target = next(c for c in raw["cells"] if c["mode"] == "INT8" and c["family"] == "GPQA")
    target[field] = 0.0
    with pytest.raises(ProfileError, match=r"INT8, GPQA"):
        profile_from_dict(raw)


def test_unknown_keys_rejected(profile):
    raw = _raw(profile)
    raw["cells"][0]["colour"] = "red"
    with pytest.raises(ProfileError, match="unknown keys"):
        profile_from_dict(raw)
    raw = _raw(profile)
    raw["notes"] = "x"
    with pytest.raises(ProfileError, match="unknown keys"):
        profile_from_dict(raw)


def test_missing_file(tmp_path):
    with pytest.raises(ProfileError, match="not found"):
        load_profile(tmp_path / "nope.json")


def test_anchor_throughput_identity_enforced(profile):
    raw = _raw(profile)
    cell = next(c for c in raw["cells"] if c["mode"] == "GPTQPlusPrefixCaching")
    cell["anchors"][1]["throughput_tps"] = 150.0  # 0.942 s * 150 = 141 tokens, not 128
    with pytest.raises(ProfileError, match="tokens"):
        profile_from_dict(raw)


def test_anchor_ratio_enforced(profile):
    raw = _raw(profile)
    cell = next(c for c in raw["cells"] if c["mode"] == "GPTQPlusPrefixCaching")
    cell["latency_speedup"] = 2.5
    with pytest.raises(ProfileError, match="anchored"):
        profile_from_dict(raw)


def test_save_load_round_trip(profile, tmp_path):
    path = tmp_path / "p.json"
    save_profile(profile, path)
    again = load_profile(path)
    assert dict(again.cells) == dict(profile.cells)
    assert again.baseline_costs == profile.baseline_costs


def test_env_var_overrides_default_path(monkeypatch, tmp_path):
    monkeypatch.setenv("MODESWITCH_PROFILE", str(tmp_path / "x.json"))
    assert default_profile_path() == tmp_path / "x.json"


@pytest.mark.parametrize(
    "prefill, decode, prompt, output, expected",
    [(1.0, 10.0, 128, 32, 448.0), (0.0, 10.0, 1024, 128, 1280.0)],
)
def test_fp16_latency_formula(prefill, decode, prompt, output, expected):
    # The validated cost model refuses a zero rate; the formula itself does not care.
    costs = SimpleNamespace(prefill_ms_per_token=prefill, decode_ms_per_token=decode, fixed_overhead_ms=0.0)
    assert fp16_latency(costs, RequestDescriptor("r", prompt, output)) == expected


def test_zero_prefill_rate_rejected():
    with pytest.raises(ProfileError):
        BaselineCostModel(0.0, 10.0, 0.0, 1.0, 1.0)


def test_default_costs_calibration(profile):
    costs = profile.baseline_costs
    shape = NOMINAL_SHAPES[F.SHARED_PREFIX_CHAT]
    req = RequestDescriptor("sp", shape.prompt_tokens, 128, shared_prefix=True)
    assert abs(fp16_latency(costs, req) - 1903) / 1903 <= 0.10
    ls, sl = NOMINAL_SHAPES[F.SYNTHETIC_LS], NOMINAL_SHAPES[F.SYNTHETIC_SL]
    assert costs.prefill_ms_per_token * ls.prompt_tokens > costs.decode_ms_per_token * ls.output_tokens
    assert costs.decode_ms_per_token * sl.output_tokens > costs.prefill_ms_per_token * sl.prompt_tokens
