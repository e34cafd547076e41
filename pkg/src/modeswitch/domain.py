"""Shared vocabulary: requests, workload families, inference modes, metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional


class DomainError(ValueError):
    """Raised when a value falls outside its mathematical or semantic domain."""


class WorkloadFamily(str, Enum):
    SYNTHETIC_SS = "SyntheticSS"
    SYNTHETIC_SL = "SyntheticSL"
    SYNTHETIC_LS = "SyntheticLS"
    SYNTHETIC_LL = "SyntheticLL"
    SHARED_PREFIX_CHAT = "SharedPrefixChat"
    MEMORY_PRESSURE = "MemoryPressureLongContext"
    MMLU_PRO = "MMLUPro"
    GSM8K = "GSM8K"
    TRUTHFUL_QA = "TruthfulQA"
    GPQA = "GPQA"
    MLU = "MLU"

    @property
    def index(self) -> int:
        return _FAMILY_INDEX[self]

    @property
    def is_benchmark(self) -> bool:
        return self in BENCHMARK_FAMILIES

    @property
    def is_synthetic(self) -> bool:
        return self in SYNTHETIC_FAMILIES


class InferenceMode(str, Enum):
    FP16 = "FP16"
    INT8 = "INT8"
    GPTQ4 = "GPTQ4"
    AWQ4 = "AWQ4"
    SPECULATIVE = "SpeculativeDecoding"
    PREFIX_CACHING = "PrefixCaching"
    CHUNKED_PREFILL = "ChunkedPrefill"
    CONTINUOUS_BATCHING = "ContinuousBatching"
    CUDA_GRAPHS = "CudaGraphs"
    KV_COMPRESSION = "KVCacheCompression"
    GPTQ_PREFIX = "GPTQPlusPrefixCaching"
    INT8_BATCHING = "INT8PlusContinuousBatching"

    @property
    def order(self) -> int:
        return _MODE_INDEX[self]

    @property
    def needs_batch(self) -> bool:
        """Batching modes only make sense with co-scheduled requests."""
        return self in (InferenceMode.CONTINUOUS_BATCHING, InferenceMode.INT8_BATCHING)


class WorkloadClass(str, Enum):
    BATCHED = "Batched"
    SHARED_PREFIX = "SharedPrefix"
    MEMORY_PRESSURE = "MemoryPressure"
    PREFILL_HEAVY = "PrefillHeavy"
    DECODE_HEAVY = "DecodeHeavy"
    BALANCED = "Balanced"


_FAMILY_INDEX = {f: i for i, f in enumerate(WorkloadFamily)}
_MODE_INDEX = {m: i for i, m in enumerate(InferenceMode)}

SYNTHETIC_FAMILIES = (
    WorkloadFamily.SYNTHETIC_SS,
    WorkloadFamily.SYNTHETIC_SL,
    WorkloadFamily.SYNTHETIC_LS,
    WorkloadFamily.SYNTHETIC_LL,
)
BENCHMARK_FAMILIES = (
    WorkloadFamily.MMLU_PRO,
    WorkloadFamily.GSM8K,
    WorkloadFamily.TRUTHFUL_QA,
    WorkloadFamily.GPQA,
    WorkloadFamily.MLU,
)
# GSM8K is scored on generated answers; the rest are multiple choice.
CHOICE_SCORED = frozenset(
    {WorkloadFamily.MMLU_PRO, WorkloadFamily.TRUTHFUL_QA, WorkloadFamily.GPQA, WorkloadFamily.MLU}
)

CONTROLLER_MODES = (
    InferenceMode.GPTQ4,
    InferenceMode.SPECULATIVE,
    InferenceMode.GPTQ_PREFIX,
    InferenceMode.INT8_BATCHING,
    InferenceMode.INT8,
    InferenceMode.FP16,
)

# Fixed class order for learned routers; also the tie-break order for votes.
ORACLE_CLASSES = (
    InferenceMode.FP16,
    InferenceMode.INT8,
    InferenceMode.GPTQ4,
    InferenceMode.SPECULATIVE,
    InferenceMode.GPTQ_PREFIX,
)


def parse_family(value: str) -> WorkloadFamily:
    return _parse_enum(WorkloadFamily, value)


def parse_mode(value: str) -> InferenceMode:
    return _parse_enum(InferenceMode, value)


def _parse_enum(cls, value: str):
    try:
        return cls(value)
    except ValueError:
        pass
    folded = value.replace("_", "").replace("-", "").lower()
    for member in cls:
        if member.value.lower() == folded or member.name.replace("_", "").lower() == folded:
            return member
    raise DomainError(f"unknown {cls.__name__}: {value!r}")


@dataclass(frozen=True)
class RequestDescriptor:
    request_id: str
    prompt_tokens: int
    expected_output_tokens: int
    shared_prefix: bool = False
    memory_pressure: bool = False
    batch_pressure: int = 1
    workload_tag: Optional[WorkloadFamily] = None

    def __post_init__(self):
        if self.prompt_tokens < 1:
            raise DomainError(f"{self.request_id}: prompt_tokens must be >= 1")
        if self.expected_output_tokens < 1:
            raise DomainError(f"{self.request_id}: expected_output_tokens must be >= 1")
        if self.batch_pressure < 1:
            raise DomainError(f"{self.request_id}: batch_pressure must be >= 1")

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "prompt_tokens": self.prompt_tokens,
            "expected_output_tokens": self.expected_output_tokens,
            "shared_prefix": self.shared_prefix,
            "memory_pressure": self.memory_pressure,
            "batch_pressure": self.batch_pressure,
            "workload_tag": self.workload_tag.value if self.workload_tag else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RequestDescriptor":
        expected = {
            "request_id",
            "prompt_tokens",
            "expected_output_tokens",
            "shared_prefix",
            "memory_pressure",
            "batch_pressure",
            "workload_tag",
        }
        extra = set(d) - expected
        missing = expected - set(d)
        if extra or missing:
            raise DomainError(f"bad request record: missing={sorted(missing)} extra={sorted(extra)}")
        for key in ("prompt_tokens", "expected_output_tokens", "batch_pressure"):
            if not isinstance(d[key], int) or isinstance(d[key], bool):
                raise DomainError(f"{d['request_id']}: {key} must be an integer")
        tag = d["workload_tag"]
        return cls(
            request_id=str(d["request_id"]),
            prompt_tokens=d["prompt_tokens"],
            expected_output_tokens=d["expected_output_tokens"],
            shared_prefix=bool(d["shared_prefix"]),
            memory_pressure=bool(d["memory_pressure"]),
            batch_pressure=d["batch_pressure"],
            workload_tag=parse_family(tag) if tag is not None else None,
        )


@dataclass(frozen=True)
class RequestMetrics:
    latency_ms: float
    energy_per_token_j: float
    throughput_tps: float
    memory_ratio: float
    quality_delta_pp: float
    routing_overhead_ms: float = 0.0

    @classmethod
    def from_latency(
        cls,
        output_tokens: int,
        latency_ms: float,
        energy_per_token_j: float,
        memory_ratio: float,
        quality_delta_pp: float,
        routing_overhead_ms: float = 0.0,
    ) -> "RequestMetrics":
        if latency_ms <= 0:
            raise DomainError("latency must be positive")
        return cls(
            latency_ms=latency_ms,
            energy_per_token_j=energy_per_token_j,
            throughput_tps=output_tokens / (latency_ms / 1000.0),
            memory_ratio=memory_ratio,
            quality_delta_pp=quality_delta_pp,
            routing_overhead_ms=routing_overhead_ms,
        )


def speedup(fp16_latency_ms: float, mode_latency_ms: float) -> float:
    """FP16 latency over mode latency; values above 1.0 are faster than FP16."""
    if fp16_latency_ms <= 0 or mode_latency_ms <= 0:
        raise DomainError("latencies must be positive")
    return fp16_latency_ms / mode_latency_ms


def ratio_vs_baseline(mode_value: float, fp16_value: float) -> float:
    if fp16_value <= 0:
        raise DomainError("FP16 reference value must be positive")
    if mode_value < 0:
        raise DomainError("mode value must be nonnegative")
    return mode_value / fp16_value


def write_trace(requests: Iterable[RequestDescriptor], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in requests:
            fh.write(json.dumps(r.to_dict(), separators=(", ", ": ")) + "\n")


def read_trace(path) -> list[RequestDescriptor]:
    requests = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        req = RequestDescriptor.from_dict(record)
        if req.request_id in seen:
            raise DomainError(f"{path}:{lineno}: duplicate request_id {req.request_id!r}")
        seen.add(req.request_id)
        requests.append(req)
    return requests
