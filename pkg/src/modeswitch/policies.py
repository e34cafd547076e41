"""Routing policies: the priority-rule controller, the constraint-aware oracle, static modes."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .classifier import ClassifierConfig, classify, extract_features, resolve_family
from .domain import (
    BENCHMARK_FAMILIES,
    CHOICE_SCORED,
    CONTROLLER_MODES,
    DomainError,
    InferenceMode,
    RequestDescriptor,
    WorkloadClass,
    WorkloadFamily,
)
from .profiles import ModeProfileCell, ProfileError, ProfileTable

log = logging.getLogger(__name__)


class Reason(str, Enum):
    RULE1_BATCHED = "Rule1Batched"
    RULE2_SHARED_PREFIX = "Rule2SharedPrefix"
    RULE3_MEMORY_PRESSURE = "Rule3MemoryPressure"
    RULE4_SYNTHETIC_SHAPE = "Rule4SyntheticShape"
    RULE5_DECODE_HEAVY = "Rule5DecodeHeavy"
    RULE6_CHOICE_BENCHMARK = "Rule6ChoiceBenchmark"
    RULE7_DEFAULT = "Rule7Default"
    ORACLE_FEASIBLE_FASTEST = "OracleFeasibleFastest"
    ORACLE_FALLBACK_FP16 = "OracleFallbackFP16"
    STATIC = "Static"
    LEARNED_VOTE = "LearnedVote"


@dataclass(frozen=True)
class RoutingDecision:
    mode: InferenceMode
    reason: Reason
    overhead_ms: float = 0.0

    def with_extra_overhead(self, extra_ms: float) -> "RoutingDecision":
        return RoutingDecision(self.mode, self.reason, self.overhead_ms + extra_ms)


@dataclass(frozen=True)
class ConstraintSet:
    quality_floor_pp: float = -1.5
    energy_ratio_max: float = 1.0
    memory_ratio_max: float = 1.10

    def __post_init__(self):
        if not self.energy_ratio_max > 0 or not self.memory_ratio_max > 0:
            raise DomainError("energy and memory caps must be positive")

    def violations(self, cell: ModeProfileCell) -> list[str]:
        out = []
        if cell.quality_delta_pp < self.quality_floor_pp:
            out.append("quality")
        if cell.energy_ratio > self.energy_ratio_max:
            out.append("energy")
        if cell.memory_ratio > self.memory_ratio_max:
            out.append("memory")
        return out

    def satisfied_by(self, cell: ModeProfileCell) -> bool:
        return not self.violations(cell)


def _elapsed_ms(start_ns: int) -> float:
    return (time.perf_counter_ns() - start_ns) / 1e6


_SHAPE_RULE_TAGS = frozenset(
    {WorkloadFamily.SYNTHETIC_SS, WorkloadFamily.SYNTHETIC_LS, WorkloadFamily.SYNTHETIC_LL}
)


def _rule_choice(request: RequestDescriptor, wclass: WorkloadClass) -> tuple[InferenceMode, Reason]:
    tag = request.workload_tag
    if wclass is WorkloadClass.BATCHED:
        return InferenceMode.INT8_BATCHING, Reason.RULE1_BATCHED
    if wclass is WorkloadClass.SHARED_PREFIX:
        return InferenceMode.GPTQ_PREFIX, Reason.RULE2_SHARED_PREFIX
    if wclass is WorkloadClass.MEMORY_PRESSURE:
        return InferenceMode.GPTQ4, Reason.RULE3_MEMORY_PRESSURE
    if tag in _SHAPE_RULE_TAGS:
        return InferenceMode.GPTQ4, Reason.RULE4_SYNTHETIC_SHAPE
    if wclass is WorkloadClass.DECODE_HEAVY or tag is WorkloadFamily.GSM8K:
        return InferenceMode.SPECULATIVE, Reason.RULE5_DECODE_HEAVY
    if tag in CHOICE_SCORED or (wclass is WorkloadClass.PREFILL_HEAVY and tag in BENCHMARK_FAMILIES):
        return InferenceMode.INT8, Reason.RULE6_CHOICE_BENCHMARK
    return InferenceMode.INT8, Reason.RULE7_DEFAULT


def route_rule(
    request: RequestDescriptor, wclass: WorkloadClass, config: ClassifierConfig = ClassifierConfig()
) -> RoutingDecision:
    # config is accepted for interface symmetry; all thresholds were applied by classify().
    start = time.perf_counter_ns()
    mode, reason = _rule_choice(request, wclass)
    return RoutingDecision(mode, reason, _elapsed_ms(start))


def cell_usable(cell: ModeProfileCell, request: RequestDescriptor) -> bool:
    """Feasibility flag plus the mode's own precondition (batching needs company)."""
    if not cell.feasible:
        return False
    if cell.mode.needs_batch and request.batch_pressure <= 1:
        return False
    return True


def route_oracle(
    request: RequestDescriptor,
    family: WorkloadFamily,
    table: ProfileTable,
    constraints: ConstraintSet = ConstraintSet(),
    candidates: Sequence[InferenceMode] = CONTROLLER_MODES,
) -> RoutingDecision:
    """Fastest candidate meeting every constraint; ties go to lower energy, then enum order."""
    if InferenceMode.FP16 not in candidates:
        raise DomainError("oracle candidates must include FP16")
    if not table.has(InferenceMode.FP16, family):
        raise ProfileError(f"no FP16 cell for family {family.value}")

    best = None
    best_key = None
    non_fp16_feasible = False
    for mode in candidates:
        if not table.has(mode, family):
            log.debug("oracle skips %s on %s: no profile cell", mode.value, family.value)
            continue
        cell = table.lookup(mode, family)
        if not cell_usable(cell, request) or not constraints.satisfied_by(cell):
            continue
        if mode is not InferenceMode.FP16:
            non_fp16_feasible = True
        key = (cell.latency_speedup, -cell.energy_ratio, -mode.order)
        if best_key is None or key > best_key:
            best, best_key = mode, key

    has_alternatives = any(m is not InferenceMode.FP16 for m in candidates)
    if best is None or (has_alternatives and not non_fp16_feasible):
        return RoutingDecision(InferenceMode.FP16, Reason.ORACLE_FALLBACK_FP16)
    return RoutingDecision(best, Reason.ORACLE_FEASIBLE_FASTEST)


def route_static(mode: InferenceMode) -> RoutingDecision:
    return RoutingDecision(mode, Reason.STATIC)


class Policy:
    """A routing policy maps one request to one decision."""

    name = "policy"

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        raise NotImplementedError

    def decide_all(self, requests: Iterable[RequestDescriptor]) -> list[RoutingDecision]:
        return [self.decide(r) for r in requests]


class RulePolicy(Policy):
    name = "rule"

    def __init__(self, config: ClassifierConfig = ClassifierConfig()):
        self.config = config

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        start = time.perf_counter_ns()
        wclass = classify(extract_features(request), self.config)
        mode, reason = _rule_choice(request, wclass)
        return RoutingDecision(mode, reason, _elapsed_ms(start))


class StaticPolicy(Policy):
    """Fixed-mode baseline. Makes no decision at request time, so it adds no overhead."""

    def __init__(self, mode: InferenceMode):
        self.mode = mode
        self.name = "fp16" if mode is InferenceMode.FP16 else f"static:{mode.value}"

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        return route_static(self.mode)


class OraclePolicy(Policy):
    """Offline hindsight reference: reads the profile, so its overhead is not charged."""

    name = "oracle"

    def __init__(
        self,
        table: ProfileTable,
        constraints: ConstraintSet = ConstraintSet(),
        candidates: Sequence[InferenceMode] = CONTROLLER_MODES,
        config: ClassifierConfig = ClassifierConfig(),
    ):
        self.table = table
        self.constraints = constraints
        self.candidates = tuple(candidates)
        self.config = config

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        family = resolve_family(request, self.config)
        return route_oracle(request, family, self.table, self.constraints, self.candidates)


class OverheadPolicy(Policy):
    """Wraps a policy and charges a fixed extra routing cost per request."""

    def __init__(self, inner: Policy, extra_ms: float):
        if extra_ms < 0:
            raise DomainError("extra overhead must be nonnegative")
        self.inner = inner
        self.extra_ms = extra_ms
        self.name = f"{inner.name}+{extra_ms:g}ms"

    def decide(self, request: RequestDescriptor) -> RoutingDecision:
        return self.inner.decide(request).with_extra_overhead(self.extra_ms)
