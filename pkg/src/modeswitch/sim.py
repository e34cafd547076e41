"""Profile-driven replay of traces through routing policies, with aggregate reports."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifier import ClassifierConfig, resolve_family
from .domain import (
    BENCHMARK_FAMILIES,
    CONTROLLER_MODES,
    DomainError,
    InferenceMode,
    RequestDescriptor,
    RequestMetrics,
    WorkloadFamily,
    parse_family,
    speedup,
)
from .policies import ConstraintSet, OraclePolicy, Policy, RoutingDecision, cell_usable
from .profiles import BaselineCostModel, MissingCellError, ProfileTable, Provenance, fp16_latency


class SimulationError(DomainError):
    def __init__(self, request_id: str, message: str):
        self.request_id = request_id
        super().__init__(f"request {request_id}: {message}")


# --- energy from power samples -------------------------------------------------------


@dataclass(frozen=True)
class PowerTrace:
    timestamps_ms: tuple[float, ...]
    power_w: tuple[float, ...]

    def __post_init__(self):
        if len(self.timestamps_ms) != len(self.power_w):
            raise DomainError("timestamps and power samples differ in length")
        if len(self.timestamps_ms) < 2:
            raise DomainError("power trace needs at least 2 samples")
        if any(b <= a for a, b in zip(self.timestamps_ms, self.timestamps_ms[1:])):
            raise DomainError("power trace timestamps must be strictly increasing")
        if any(t < 0 for t in self.timestamps_ms) or any(p < 0 for p in self.power_w):
            raise DomainError("timestamps and power must be nonnegative")

    @classmethod
    def from_samples(cls, samples) -> "PowerTrace":
        samples = list(samples)
        return cls(tuple(float(t) for t, _ in samples), tuple(float(p) for _, p in samples))


def energy_from_power_trace(trace: PowerTrace, tokens: int) -> float:
    """Joules per token: trapezoid integral of power over the trace, divided by tokens."""
    if tokens < 1:
        raise DomainError("tokens must be positive")
    joules = float(np.trapezoid(trace.power_w, np.asarray(trace.timestamps_ms) / 1000.0))
    return joules / tokens


def read_power_trace(path) -> PowerTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["timestamp_ms", "power_w"]:
            raise DomainError(f"{path}: header must be 'timestamp_ms,power_w'")
        try:
            samples = [(float(r["timestamp_ms"]), float(r["power_w"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{path}: non-numeric sample ({exc})") from exc
    return PowerTrace.from_samples(samples)


def write_power_trace(trace: PowerTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_ms", "power_w"])
        w.writerows(zip(trace.timestamps_ms, trace.power_w))


# --- per-request simulation -----------------------------------------------------------


@dataclass(frozen=True)
class SimRequestResult:
    request_id: str
    decision: RoutingDecision
    family: WorkloadFamily
    mode: InferenceMode  # executed mode; differs from decision.mode only on FP16 fallback
    output_tokens: int
    fp16_latency_ms: float
    mode_latency_ms: float
    speedup: float
    energy_ratio: float
    memory_ratio: float
    quality_delta_pp: float
    constraint_violated: bool
    provenance_flag: bool
    fallback_used: bool = False
    energy_j: float = 0.0

    def metrics(self, costs: BaselineCostModel) -> RequestMetrics:
        return RequestMetrics.from_latency(
            self.output_tokens,
            self.mode_latency_ms,
            costs.fp16_energy_j_per_token * self.energy_ratio,
            self.memory_ratio,
            self.quality_delta_pp,
            self.decision.overhead_ms,
        )


def simulate_request(
    request: RequestDescriptor,
    decision: RoutingDecision,
    table: ProfileTable,
    costs: Optional[BaselineCostModel] = None,
    constraints: ConstraintSet = ConstraintSet(),
    fallback: bool = False,
    config: ClassifierConfig = ClassifierConfig(),
) -> SimRequestResult:
    costs = costs or table.baseline_costs
    family = resolve_family(request, config)
    mode = decision.mode
    fallback_used = False
    try:
        cell = table.lookup(mode, family)
        problem = None if cell_usable(cell, request) else f"mode {mode.value} is infeasible for this request"
    except MissingCellError as exc:
        problem = str(exc)
    if problem is not None:
        if not fallback:
            raise SimulationError(request.request_id, problem)
        mode, fallback_used = InferenceMode.FP16, True
        try:
            cell = table.lookup(mode, family)
        except MissingCellError as exc:
            raise SimulationError(request.request_id, str(exc)) from None

    base = fp16_latency(costs, request)
    latency = base / cell.latency_speedup + decision.overhead_ms
    return SimRequestResult(
        request_id=request.request_id,
        decision=decision,
        family=family,
        mode=mode,
        output_tokens=request.expected_output_tokens,
        fp16_latency_ms=base,
        mode_latency_ms=latency,
        speedup=speedup(base, latency),
        energy_ratio=cell.energy_ratio,
        memory_ratio=cell.memory_ratio,
        quality_delta_pp=cell.quality_delta_pp,
        constraint_violated=not constraints.satisfied_by(cell),
        provenance_flag=cell.provenance is Provenance.SYNTHESIZED,
        fallback_used=fallback_used,
        energy_j=costs.fp16_energy_j_per_token * cell.energy_ratio * request.expected_output_tokens,
    )


# --- aggregation ------------------------------------------------------------------------


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


@dataclass(frozen=True)
class FamilySummary:
    family: WorkloadFamily
    count: int
    mean_speedup: float
    mean_energy_ratio: float
    mean_memory_ratio: float
    mean_quality_delta_pp: float
    mode_counts: dict

    @property
    def majority_mode(self) -> InferenceMode:
        return max(self.mode_counts.items(), key=lambda kv: (kv[1], -kv[0].order))[0]


@dataclass(frozen=True)
class PolicyReport:
    policy: str
    n_requests: int
    mean_speedup: float
    aggregate_speedup: float
    mean_energy_ratio: float
    mean_memory_ratio: float
    mean_quality_delta_pp: float
    collapsed_mean_speedup: float
    collapsed_mean_energy_ratio: float
    oracle_match_rate: float
    constraint_violation_rate: float
    mean_overhead_ms: float
    synthesized_cell_usage: float
    fallback_rate: float
    per_family: dict = field(default_factory=dict)
    results: tuple = field(default=(), repr=False)

    SCALARS = (
        "n_requests",
        "mean_speedup",
        "aggregate_speedup",
        "mean_energy_ratio",
        "mean_memory_ratio",
        "mean_quality_delta_pp",
        "collapsed_mean_speedup",
        "collapsed_mean_energy_ratio",
        "oracle_match_rate",
        "constraint_violation_rate",
        "mean_overhead_ms",
        "synthesized_cell_usage",
        "fallback_rate",
    )


def summarize(policy_name: str, results: Sequence[SimRequestResult], oracle_modes=None) -> PolicyReport:
    if not results:
        raise DomainError("cannot summarize an empty trace")
    n = len(results)
    by_family: dict[WorkloadFamily, list[SimRequestResult]] = {}
    for r in results:
        by_family.setdefault(r.family, []).append(r)
    per_family = {}
    for family in WorkloadFamily:
        rows = by_family.get(family)
        if not rows:
            continue
        per_family[family] = FamilySummary(
            family=family,
            count=len(rows),
            mean_speedup=_mean(r.speedup for r in rows),
            mean_energy_ratio=_mean(r.energy_ratio for r in rows),
            mean_memory_ratio=_mean(r.memory_ratio for r in rows),
            mean_quality_delta_pp=_mean(r.quality_delta_pp for r in rows),
            mode_counts=dict(Counter(r.decision.mode for r in rows)),
        )
    if oracle_modes is None:
        match = float("nan")
    else:
        if len(oracle_modes) != n:
            raise DomainError("oracle decisions do not line up with results")
        match = sum(r.decision.mode is m for r, m in zip(results, oracle_modes)) / n
    return PolicyReport(
        policy=policy_name,
        n_requests=n,
        mean_speedup=_mean(r.speedup for r in results),
        aggregate_speedup=math.fsum(r.fp16_latency_ms for r in results)
        / math.fsum(r.mode_latency_ms for r in results),
        mean_energy_ratio=_mean(r.energy_ratio for r in results),
        mean_memory_ratio=_mean(r.memory_ratio for r in results),
        mean_quality_delta_pp=_mean(r.quality_delta_pp for r in results),
        collapsed_mean_speedup=_mean(s.mean_speedup for s in per_family.values()),
        collapsed_mean_energy_ratio=_mean(s.mean_energy_ratio for s in per_family.values()),
        oracle_match_rate=match,
        constraint_violation_rate=sum(r.constraint_violated for r in results) / n,
        mean_overhead_ms=_mean(r.decision.overhead_ms for r in results),
        synthesized_cell_usage=sum(r.provenance_flag for r in results) / n,
        fallback_rate=sum(r.fallback_used for r in results) / n,
        per_family=per_family,
        results=tuple(results),
    )


def simulate_trace(
    trace: Sequence[RequestDescriptor],
    policy: Policy,
    table: ProfileTable,
    costs: Optional[BaselineCostModel] = None,
    constraints: ConstraintSet = ConstraintSet(),
    fallback: bool = False,
    config: ClassifierConfig = ClassifierConfig(),
) -> list[SimRequestResult]:
    return [
        simulate_request(req, policy.decide(req), table, costs, constraints, fallback, config) for req in trace
    ]


def oracle_decisions(
    trace: Sequence[RequestDescriptor],
    table: ProfileTable,
    constraints: ConstraintSet = ConstraintSet(),
    config: ClassifierConfig = ClassifierConfig(),
    candidates=None,
) -> list[RoutingDecision]:
    oracle = OraclePolicy(table, constraints, candidates or CONTROLLER_MODES, config)
    return oracle.decide_all(trace)


def run_policy(
    trace: Sequence[RequestDescriptor],
    policy: Policy,
    table: ProfileTable,
    costs: Optional[BaselineCostModel] = None,
    constraints: ConstraintSet = ConstraintSet(),
    fallback: bool = False,
    config: ClassifierConfig = ClassifierConfig(),
    oracle_modes=None,
) -> PolicyReport:
    if oracle_modes is None:
        oracle_modes = [d.mode for d in oracle_decisions(trace, table, constraints, config)]
    results = simulate_trace(trace, policy, table, costs, constraints, fallback, config)
    return summarize(policy.name, results, oracle_modes)


@dataclass(frozen=True)
class Comparison:
    reports: tuple[PolicyReport, ...]
    oracle: PolicyReport

    def capture(self, report: PolicyReport) -> float:
        """Latency oracle capture: policy mean speedup over oracle mean speedup."""
        return report.mean_speedup / self.oracle.mean_speedup

    def report(self, name: str) -> PolicyReport:
        for r in self.reports:
            if r.policy == name:
                return r
        raise KeyError(name)


def compare_policies(
    trace: Sequence[RequestDescriptor],
    policies: Sequence[Policy],
    table: ProfileTable,
    costs: Optional[BaselineCostModel] = None,
    constraints: ConstraintSet = ConstraintSet(),
    fallback: bool = False,
    config: ClassifierConfig = ClassifierConfig(),
) -> Comparison:
    if not policies:
        raise DomainError("need at least one policy to compare")
    oracle_policy = OraclePolicy(table, constraints, config=config)
    oracle_modes = [d.mode for d in oracle_policy.decide_all(trace)]
    reports = [
        run_policy(trace, p, table, costs, constraints, fallback, config, oracle_modes) for p in policies
    ]
    oracle_report = next((r for r, p in zip(reports, policies) if isinstance(p, OraclePolicy)), None)
    if oracle_report is None:
        oracle_report = run_policy(trace, oracle_policy, table, costs, constraints, fallback, config, oracle_modes)
    return Comparison(tuple(reports), oracle_report)


def quality_gate_failures(
    report: PolicyReport, constraints: ConstraintSet = ConstraintSet()
) -> list[tuple[WorkloadFamily, float]]:
    """Benchmark families whose mean quality delta falls below the floor."""
    return [
        (family, s.mean_quality_delta_pp)
        for family, s in report.per_family.items()
        if family in BENCHMARK_FAMILIES and s.mean_quality_delta_pp < constraints.quality_floor_pp
    ]


# --- CSV export / import ------------------------------------------------------------------

COMPARISON_COLUMNS = ("policy",) + PolicyReport.SCALARS + ("oracle_capture",)
PER_FAMILY_COLUMNS = (
    "policy",
    "family",
    "count",
    "mean_speedup",
    "mean_energy_ratio",
    "mean_memory_ratio",
    "mean_quality_delta_pp",
    "majority_mode",
)


def write_comparison_csv(comparison: Comparison, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in comparison.reports:
            w.writerow([r.policy] + [repr(getattr(r, k)) for k in PolicyReport.SCALARS] + [repr(comparison.capture(r))])


def read_comparison_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COMPARISON_COLUMNS:
            raise DomainError(f"{path}: unexpected comparison header")
        rows = []
        for raw in reader:
            row = {"policy": raw["policy"], "n_requests": int(raw["n_requests"])}
            for k in COMPARISON_COLUMNS[2:]:
                row[k] = float(raw[k])
            rows.append(row)
    return rows


def write_per_family_csv(reports: Sequence[PolicyReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PER_FAMILY_COLUMNS)
        for r in reports:
            for family, s in r.per_family.items():
                w.writerow(
                    [
                        r.policy,
                        family.value,
                        s.count,
                        repr(s.mean_speedup),
                        repr(s.mean_energy_ratio),
                        repr(s.mean_memory_ratio),
                        repr(s.mean_quality_delta_pp),
                        s.majority_mode.value,
                    ]
                )


def read_per_family_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PER_FAMILY_COLUMNS:
            raise DomainError(f"{path}: unexpected per-family header")
        return [
            {
                "policy": raw["policy"],
                "family": parse_family(raw["family"]),
                "count": int(raw["count"]),
                "mean_speedup": float(raw["mean_speedup"]),
                "mean_energy_ratio": float(raw["mean_energy_ratio"]),
                "mean_memory_ratio": float(raw["mean_memory_ratio"]),
                "mean_quality_delta_pp": float(raw["mean_quality_delta_pp"]),
                "majority_mode": raw["majority_mode"],
            }
            for raw in reader
        ]


def markdown_summary(comparison: Comparison) -> str:
    lines = [
        "| Policy | Speedup | Collapsed speedup | Energy ratio | Oracle match | Violations | Overhead (ms) | Capture | Synthesized cells |",
        "|---|---|---|---|---|---|---|---|---|",
    ]
    for r in comparison.reports:
        lines.append(
            f"| {r.policy} | {r.mean_speedup:.3f}x | {r.collapsed_mean_speedup:.3f}x | {r.mean_energy_ratio:.3f}x "
            f"| {r.oracle_match_rate:.1%} | {r.constraint_violation_rate:.1%} | {r.mean_overhead_ms:.4f} "
            f"| {comparison.capture(r):.3f} | {r.synthesized_cell_usage:.1%} |"
        )
    if any(r.synthesized_cell_usage > 0 for r in comparison.reports):
        lines.append("")
        lines.append("Synthesized profile cells (placeholder values, not measurements) were used; see the last column.")
    return "\n".join(lines) + "\n"
