"""Request-time feature extraction and deterministic workload classification."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .domain import (
    BENCHMARK_FAMILIES,
    CHOICE_SCORED,
    DomainError,
    RequestDescriptor,
    WorkloadClass,
    WorkloadFamily,
)

GENERATION_SCORED = 0
CHOICE_SCORED_CODE = 1


@dataclass(frozen=True)
class FeatureVector:
    prompt_tokens: int
    expected_output_tokens: int
    shared_prefix: int
    memory_pressure: int
    batch_pressure: int
    workload_tag_code: int
    output_to_prompt_ratio: float
    benchmark_family_code: int
    eval_mode_code: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        if set(d) != set(FEATURE_NAMES):
            raise DomainError(f"feature record must have exactly {list(FEATURE_NAMES)}")
        return cls(
            **{
                name: float(d[name]) if name == "output_to_prompt_ratio" else int(d[name])
                for name in FEATURE_NAMES
            }
        )


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))


@dataclass(frozen=True)
class ClassifierConfig:
    long_prompt_threshold: int = 512
    long_output_threshold: int = 64
    decode_heavy_ratio: float = 0.5
    batch_threshold: int = 2

    def __post_init__(self):
        for name in ("long_prompt_threshold", "long_output_threshold", "batch_threshold"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if not self.decode_heavy_ratio > 0:
            raise DomainError("decode_heavy_ratio must be positive")


def eval_mode_code(tag: WorkloadFamily | None) -> int:
    return CHOICE_SCORED_CODE if tag in CHOICE_SCORED else GENERATION_SCORED


def extract_features(request: RequestDescriptor) -> FeatureVector:
    tag = request.workload_tag
    return FeatureVector(
        prompt_tokens=request.prompt_tokens,
        expected_output_tokens=request.expected_output_tokens,
        shared_prefix=int(request.shared_prefix),
        memory_pressure=int(request.memory_pressure),
        batch_pressure=request.batch_pressure,
        workload_tag_code=tag.index if tag is not None else -1,
        output_to_prompt_ratio=request.expected_output_tokens / request.prompt_tokens,
        benchmark_family_code=BENCHMARK_FAMILIES.index(tag) if tag in BENCHMARK_FAMILIES else -1,
        eval_mode_code=eval_mode_code(tag),
    )


def classify(features: FeatureVector, config: ClassifierConfig = ClassifierConfig()) -> WorkloadClass:
    """Assign exactly one class. Checks run in precedence order; the first hit wins."""
    if features.batch_pressure >= config.batch_threshold:
        return WorkloadClass.BATCHED
    if features.shared_prefix:
        return WorkloadClass.SHARED_PREFIX
    if features.memory_pressure:
        return WorkloadClass.MEMORY_PRESSURE

    long_output = features.expected_output_tokens >= config.long_output_threshold
    long_prompt = features.prompt_tokens >= config.long_prompt_threshold
    if long_output and (features.output_to_prompt_ratio >= config.decode_heavy_ratio or not long_prompt):
        return WorkloadClass.DECODE_HEAVY
    if long_prompt and not long_output:
        return WorkloadClass.PREFILL_HEAVY
    return WorkloadClass.BALANCED


def classify_request(request: RequestDescriptor, config: ClassifierConfig = ClassifierConfig()) -> WorkloadClass:
    return classify(extract_features(request), config)


def resolve_family(request: RequestDescriptor, config: ClassifierConfig = ClassifierConfig()) -> WorkloadFamily:
    """The tagged family, or the closest deployment-style family for untagged traffic."""
    if request.workload_tag is not None:
        return request.workload_tag
    if request.shared_prefix:
        return WorkloadFamily.SHARED_PREFIX_CHAT
    if request.memory_pressure:
        return WorkloadFamily.MEMORY_PRESSURE
    long_prompt = request.prompt_tokens >= config.long_prompt_threshold
    long_output = request.expected_output_tokens >= config.long_output_threshold
    return {
        (False, False): WorkloadFamily.SYNTHETIC_SS,
        (False, True): WorkloadFamily.SYNTHETIC_SL,
        (True, False): WorkloadFamily.SYNTHETIC_LS,
        (True, True): WorkloadFamily.SYNTHETIC_LL,
    }[(long_prompt, long_output)]
