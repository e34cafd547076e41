"""Seeded synthetic traces over the eleven workload families."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .domain import DomainError, RequestDescriptor, WorkloadFamily as F


class Shape(NamedTuple):
    prompt_tokens: int
    output_tokens: int
    shared_prefix: bool = False
    memory_pressure: bool = False


NOMINAL_SHAPES: Mapping[F, Shape] = {
    F.SYNTHETIC_SS: Shape(128, 32),
    F.SYNTHETIC_SL: Shape(128, 128),
    F.SYNTHETIC_LS: Shape(1024, 32),
    F.SYNTHETIC_LL: Shape(1024, 128),
    F.SHARED_PREFIX_CHAT: Shape(1024, 128, shared_prefix=True),
    F.MEMORY_PRESSURE: Shape(2048, 128, memory_pressure=True),
    # Benchmark shapes are local conventions: choice-scored sets stay short on output.
    F.MMLU_PRO: Shape(400, 16),
    F.GSM8K: Shape(250, 256),
    F.TRUTHFUL_QA: Shape(200, 32),
    F.GPQA: Shape(500, 16),
    F.MLU: Shape(300, 16),
}


@dataclass(frozen=True)
class TraceSpec:
    counts: Mapping[F, int]
    jitter: float = 0.10
    seed: int = 0
    batch_pressure: int = 4
    batched: Mapping[F, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.jitter < 0.5:
            raise DomainError("jitter must lie in [0, 0.5)")
        if any(c < 0 for c in self.counts.values()) or any(c < 0 for c in self.batched.values()):
            raise DomainError("request counts must be nonnegative")
        if self.batch_pressure < 2 and any(self.batched.values()):
            raise DomainError("batched slices need batch_pressure >= 2")

    def metadata(self) -> dict:
        return {
            "counts": {f.value: n for f, n in self.counts.items()},
            "batched": {f.value: n for f, n in self.batched.items()},
            "jitter": self.jitter,
            "seed": self.seed,
            "batch_pressure": self.batch_pressure,
            "benchmark_shapes_are_conventions": True,
            "nominal_shapes": {f.value: list(s[:2]) for f, s in NOMINAL_SHAPES.items()},
        }


def _jittered(rng: np.random.Generator, nominal: int, jitter: float) -> int:
    if jitter == 0:
        return nominal
    return max(1, int(round(nominal * rng.uniform(1.0 - jitter, 1.0 + jitter))))


def generate_trace(spec: TraceSpec) -> list[RequestDescriptor]:
    rng = np.random.default_rng(spec.seed)
    out = []
    for family in F:
        shape = NOMINAL_SHAPES[family]
        for slice_tag, count, batch in (
            ("", spec.counts.get(family, 0), 1),
            ("b", spec.batched.get(family, 0), spec.batch_pressure),
        ):
            for i in range(count):
                out.append(
                    RequestDescriptor(
                        request_id=f"{family.value}-{slice_tag}{i:05d}",
                        prompt_tokens=_jittered(rng, shape.prompt_tokens, spec.jitter),
                        expected_output_tokens=_jittered(rng, shape.output_tokens, spec.jitter),
                        shared_prefix=shape.shared_prefix,
                        memory_pressure=shape.memory_pressure,
                        batch_pressure=batch,
                        workload_tag=family,
                    )
                )
    return out


def balanced_family_trace(n_per_family: int, seed: int = 0, jitter: float = 0.10) -> list[RequestDescriptor]:
    if n_per_family < 1:
        raise DomainError("n_per_family must be >= 1")
    return generate_trace(TraceSpec({f: n_per_family for f in F}, jitter=jitter, seed=seed))
