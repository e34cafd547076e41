import itertools

import pytest
from hypothesis import given, strategies as st

from modeswitch.classifier import (
    CHOICE_SCORED_CODE,
    ClassifierConfig,
    FeatureVector,
    classify,
    extract_features,
    resolve_family,
)
from modeswitch.domain import (
    BENCHMARK_FAMILIES,
    DomainError,
    RequestDescriptor,
    WorkloadClass as C,
    WorkloadFamily as F,
)


def req(prompt, output, *, sp=False, mp=False, batch=1, tag=None):
    return RequestDescriptor("r", prompt, output, sp, mp, batch, tag)


def test_features_synthetic_ss():
    f = extract_features(req(128, 32, tag=F.SYNTHETIC_SS))
    assert f.output_to_prompt_ratio == 0.25
    assert f.benchmark_family_code == -1
    assert f.workload_tag_code == F.SYNTHETIC_SS.index


def test_features_gsm8k():
    f = extract_features(req(1024, 128, tag=F.GSM8K))
    assert f.output_to_prompt_ratio == 0.125
    assert f.benchmark_family_code == BENCHMARK_FAMILIES.index(F.GSM8K)
    assert f.eval_mode_code == 0


def test_features_mmlu_is_choice_scored():
    assert extract_features(req(200, 50, tag=F.MMLU_PRO)).eval_mode_code == CHOICE_SCORED_CODE


def test_untagged_codes():
    f = extract_features(req(10, 10))
    assert (f.workload_tag_code, f.benchmark_family_code, f.eval_mode_code) == (-1, -1, 0)


def test_classify_examples():
    assert classify(extract_features(req(128, 32, sp=True, batch=4))) is C.BATCHED
    assert classify(extract_features(req(1024, 32))) is C.PREFILL_HEAVY
    assert classify(extract_features(req(128, 128))) is C.DECODE_HEAVY


def _brute_force_class(p, o, sp, mp, batch, cfg):
    """Walk the precedence list literally; first condition that holds wins."""
    ratio = o / p
    chain = [
        (C.BATCHED, batch >= cfg.batch_threshold),
        (C.SHARED_PREFIX, sp),
        (C.MEMORY_PRESSURE, mp),
        (C.DECODE_HEAVY, (o >= cfg.long_output_threshold and ratio >= cfg.decode_heavy_ratio)
         or (o >= cfg.long_output_threshold and p < cfg.long_prompt_threshold)),
        (C.PREFILL_HEAVY, p >= cfg.long_prompt_threshold and o < cfg.long_output_threshold),
        (C.BALANCED, True),
    ]
    return next(c for c, hit in chain if hit)


def test_classify_matches_precedence_chain_exhaustively():
    cfg = ClassifierConfig()
    grid = itertools.product(
        [1, 127, 128, 511, 512, 1024, 4096],
        [1, 32, 63, 64, 128, 256, 2048],
        [False, True],
        [False, True],
        [1, 2, 4],
    )
    for p, o, sp, mp, batch in grid:
        got = classify(extract_features(req(p, o, sp=sp, mp=mp, batch=batch)), cfg)
        assert got is _brute_force_class(p, o, sp, mp, batch, cfg), (p, o, sp, mp, batch)


@pytest.mark.parametrize(
    "family, expected",
    [(F.SYNTHETIC_SS, C.BALANCED), (F.SYNTHETIC_SL, C.DECODE_HEAVY), (F.SYNTHETIC_LS, C.PREFILL_HEAVY),
     (F.SYNTHETIC_LL, C.BALANCED)],
)
def test_grid_quadrants(family, expected):
    from modeswitch.workload import NOMINAL_SHAPES

    shape = NOMINAL_SHAPES[family]
    assert classify(extract_features(req(shape.prompt_tokens, shape.output_tokens, tag=family))) is expected


tokens = st.integers(min_value=1, max_value=100_000)
requests = st.builds(
    req,
    tokens,
    tokens,
    sp=st.booleans(),
    mp=st.booleans(),
    batch=st.integers(min_value=1, max_value=64),
    tag=st.one_of(st.none(), st.sampled_from(list(F))),
)


@given(requests)
def test_classify_total(r):
    assert isinstance(classify(extract_features(r)), C)


@given(requests, st.integers(min_value=2, max_value=64))
def test_batch_pressure_dominates(r, batch):
    r = RequestDescriptor(r.request_id, r.prompt_tokens, r.expected_output_tokens, r.shared_prefix,
                          r.memory_pressure, batch, r.workload_tag)
    assert classify(extract_features(r)) is C.BATCHED


@given(requests)
def test_extract_copies_fields(r):
    f = extract_features(r)
    assert (f.prompt_tokens, f.expected_output_tokens, f.batch_pressure) == (
        r.prompt_tokens, r.expected_output_tokens, r.batch_pressure)
    assert (bool(f.shared_prefix), bool(f.memory_pressure)) == (r.shared_prefix, r.memory_pressure)
    assert f.output_to_prompt_ratio == pytest.approx(r.expected_output_tokens / r.prompt_tokens, rel=1e-12)
    assert (f.benchmark_family_code >= 0) == (r.workload_tag in BENCHMARK_FAMILIES)
    assert FeatureVector.from_dict(f.to_dict()) == f


def test_config_validation():
    with pytest.raises(DomainError):
        ClassifierConfig(long_prompt_threshold=0)
    with pytest.raises(DomainError):
        ClassifierConfig(decode_heavy_ratio=0)


def test_resolve_family_for_untagged_traffic():
    assert resolve_family(req(10, 10, sp=True)) is F.SHARED_PREFIX_CHAT
    assert resolve_family(req(10, 10, mp=True)) is F.MEMORY_PRESSURE
    assert resolve_family(req(1024, 32)) is F.SYNTHETIC_LS
    assert resolve_family(req(100, 200)) is F.SYNTHETIC_SL
    assert resolve_family(req(100, 200, tag=F.GPQA)) is F.GPQA
