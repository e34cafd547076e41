"""Mode performance profiles: loading, validation, lookup, and the FP16 cost model."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional

from .domain import (
    DomainError,
    InferenceMode,
    RequestDescriptor,
    WorkloadFamily,
    parse_family,
    parse_mode,
)

ANCHOR_TOKEN_TOLERANCE = 0.02
ANCHOR_RATIO_TOLERANCE = 5e-3
PROFILE_ENV_VAR = "MODESWITCH_PROFILE"


class ProfileError(DomainError):
    pass


class MissingCellError(ProfileError, KeyError):
    def __init__(self, mode: InferenceMode, family: WorkloadFamily):
        self.mode = mode
        self.family = family
        super().__init__(f"no profile cell for ({mode.value}, {family.value})")

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class Provenance(str, Enum):
    PAPER_MEASURED = "PaperMeasured"
    SYNTHESIZED = "Synthesized"


@dataclass(frozen=True)
class Anchor:
    """A raw measurement backing a cell, kept so the validator can cross-check it."""

    role: str  # "reference" or "mode"
    latency_ms: float
    throughput_tps: Optional[float] = None
    output_tokens: Optional[float] = None
    energy_j_per_token: Optional[float] = None

    _KEYS = ("role", "latency_ms", "throughput_tps", "output_tokens", "energy_j_per_token")

    def recovered_tokens(self) -> Optional[float]:
        if self.throughput_tps is None:
            return None
        return self.latency_ms / 1000.0 * self.throughput_tps

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self._KEYS if getattr(self, k) is not None}


@dataclass(frozen=True)
class ModeProfileCell:
    mode: InferenceMode
    family: WorkloadFamily
    latency_speedup: float
    energy_ratio: float
    memory_ratio: float
    quality_delta_pp: float
    feasible: bool = True
    provenance: Provenance = Provenance.PAPER_MEASURED
    anchors: tuple[Anchor, ...] = ()

    @property
    def key(self) -> tuple[InferenceMode, WorkloadFamily]:
        return (self.mode, self.family)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode.value,
            "family": self.family.value,
            "latency_speedup": self.latency_speedup,
            "energy_ratio": self.energy_ratio,
            "memory_ratio": self.memory_ratio,
            "quality_delta_pp": self.quality_delta_pp,
            "feasible": self.feasible,
            "provenance": self.provenance.value,
        }
        if self.anchors:
            d["anchors"] = [a.to_dict() for a in self.anchors]
        return d


def identity_cell(family: WorkloadFamily) -> ModeProfileCell:
    return ModeProfileCell(InferenceMode.FP16, family, 1.0, 1.0, 1.0, 0.0, True, Provenance.PAPER_MEASURED)


@dataclass(frozen=True)
class BaselineCostModel:
    """Converts token counts into an FP16 latency so requests can be simulated one by one."""

    prefill_ms_per_token: float = 0.5
    decode_ms_per_token: float = 10.5
    fixed_overhead_ms: float = 20.0
    fp16_energy_j_per_token: float = 3.26
    fp16_peak_memory_mb: float = 17500.0

    def __post_init__(self):
        for name in ("prefill_ms_per_token", "decode_ms_per_token", "fp16_energy_j_per_token", "fp16_peak_memory_mb"):
            if not getattr(self, name) > 0:
                raise ProfileError(f"baseline_costs.{name} must be positive")
        if self.fixed_overhead_ms < 0:
            raise ProfileError("baseline_costs.fixed_overhead_ms must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "prefill_ms_per_token": self.prefill_ms_per_token,
            "decode_ms_per_token": self.decode_ms_per_token,
            "fixed_overhead_ms": self.fixed_overhead_ms,
            "fp16_energy_j_per_token": self.fp16_energy_j_per_token,
            "fp16_peak_memory_mb": self.fp16_peak_memory_mb,
        }


def fp16_latency(costs: BaselineCostModel, request: RequestDescriptor) -> float:
    return (
        costs.fixed_overhead_ms
        + costs.prefill_ms_per_token * request.prompt_tokens
        + costs.decode_ms_per_token * request.expected_output_tokens
    )


@dataclass(frozen=True)
class ProfileTable:
    cells: Mapping[tuple[InferenceMode, WorkloadFamily], ModeProfileCell]
    baseline_costs: BaselineCostModel = field(default_factory=BaselineCostModel)

    def __post_init__(self):
        object.__setattr__(self, "cells", MappingProxyType(dict(self.cells)))
        validate_table(self)

    @classmethod
    def from_cells(cls, cells, baseline_costs: Optional[BaselineCostModel] = None) -> "ProfileTable":
        mapping = {}
        for cell in cells:
            if cell.key in mapping:
                raise ProfileError(f"duplicate cell ({cell.mode.value}, {cell.family.value})")
            mapping[cell.key] = cell
        return cls(mapping, baseline_costs or BaselineCostModel())

    def lookup(self, mode: InferenceMode, family: WorkloadFamily) -> ModeProfileCell:
        try:
            return self.cells[(mode, family)]
        except KeyError:
            raise MissingCellError(mode, family) from None

    def has(self, mode: InferenceMode, family: WorkloadFamily) -> bool:
        return (mode, family) in self.cells

    @property
    def families(self) -> list[WorkloadFamily]:
        present = {f for _, f in self.cells}
        return [f for f in WorkloadFamily if f in present]

    @property
    def modes(self) -> list[InferenceMode]:
        present = {m for m, _ in self.cells}
        return [m for m in InferenceMode if m in present]

    def to_dict(self) -> dict:
        ordered = sorted(self.cells.values(), key=lambda c: (c.family.index, c.mode.order))
        return {"baseline_costs": self.baseline_costs.to_dict(), "cells": [c.to_dict() for c in ordered]}


def lookup(table: ProfileTable, mode: InferenceMode, family: WorkloadFamily) -> ModeProfileCell:
    return table.lookup(mode, family)


def validate_table(table: ProfileTable) -> None:
    families = {f for _, f in table.cells}
    for family in families:
        if (InferenceMode.FP16, family) not in table.cells:
            raise ProfileError(f"missing FP16 cell for family {family.value}")
    for (mode, family), cell in table.cells.items():
        where = f"({mode.value}, {family.value})"
        if cell.key != (mode, family):
            raise ProfileError(f"cell keyed as {where} describes {cell.key}")
        for name in ("latency_speedup", "energy_ratio", "memory_ratio"):
            if not getattr(cell, name) > 0:
                raise ProfileError(f"{where}: {name} must be positive, got {getattr(cell, name)}")
        if mode is InferenceMode.FP16:
            ident = identity_cell(family)
            if (
                cell.latency_speedup != 1.0
                or cell.energy_ratio != 1.0
                or cell.memory_ratio != 1.0
                or cell.quality_delta_pp != 0.0
                or not cell.feasible
            ):
                raise ProfileError(f"{where}: FP16 cell must be the identity {ident.to_dict()}")
        _check_anchors(cell, where)


def _check_anchors(cell: ModeProfileCell, where: str) -> None:
    tokens = []
    for a in cell.anchors:
        if a.role not in ("reference", "mode"):
            raise ProfileError(f"{where}: anchor role must be 'reference' or 'mode', got {a.role!r}")
        if not a.latency_ms > 0:
            raise ProfileError(f"{where}: anchor latency must be positive")
        got = a.recovered_tokens()
        if got is None:
            continue
        if a.output_tokens is not None:
            if abs(got - a.output_tokens) / a.output_tokens > ANCHOR_TOKEN_TOLERANCE:
                raise ProfileError(
                    f"{where}: anchor latency x throughput = {got:.2f} tokens, expected {a.output_tokens}"
                )
        tokens.append(got)
    if tokens and (max(tokens) - min(tokens)) / max(tokens) > ANCHOR_TOKEN_TOLERANCE:
        raise ProfileError(f"{where}: anchors disagree on token count {tokens}")

    refs = [a for a in cell.anchors if a.role == "reference"]
    modes = [a for a in cell.anchors if a.role == "mode"]
    if len(refs) == 1 and len(modes) == 1:
        ref, mod = refs[0], modes[0]
        implied = ref.latency_ms / mod.latency_ms
        if abs(implied - cell.latency_speedup) / implied > ANCHOR_RATIO_TOLERANCE:
            raise ProfileError(f"{where}: latency_speedup {cell.latency_speedup} != anchored {implied:.4f}")
        if ref.energy_j_per_token and mod.energy_j_per_token:
            implied = mod.energy_j_per_token / ref.energy_j_per_token
            if abs(implied - cell.energy_ratio) / implied > ANCHOR_RATIO_TOLERANCE:
                raise ProfileError(f"{where}: energy_ratio {cell.energy_ratio} != anchored {implied:.4f}")


_TOP_KEYS = {"baseline_costs", "cells"}
_COST_KEYS = set(BaselineCostModel().to_dict())
_CELL_KEYS = {
    "mode",
    "family",
    "latency_speedup",
    "energy_ratio",
    "memory_ratio",
    "quality_delta_pp",
    "feasible",
    "provenance",
}


def _number(d: dict, key: str, where: str) -> float:
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProfileError(f"{where}: {key} must be a number")
    return float(v)


def _check_keys(d, required: set, optional: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ProfileError(f"{where}: expected an object")
    unknown = set(d) - required - optional
    missing = required - set(d)
    if unknown:
        raise ProfileError(f"{where}: unknown keys {sorted(unknown)}")
    if missing:
        raise ProfileError(f"{where}: missing keys {sorted(missing)}")


def profile_from_dict(data: dict) -> ProfileTable:
    _check_keys(data, _TOP_KEYS, set(), "profile")
    _check_keys(data["baseline_costs"], _COST_KEYS, set(), "baseline_costs")
    costs = BaselineCostModel(**{k: _number(data["baseline_costs"], k, "baseline_costs") for k in _COST_KEYS})
    cells = []
    for i, raw in enumerate(data["cells"]):
        where = f"cells[{i}]"
        _check_keys(raw, _CELL_KEYS, {"anchors"}, where)
        try:
            mode, family = parse_mode(raw["mode"]), parse_family(raw["family"])
            provenance = Provenance(raw["provenance"])
        except ValueError as exc:
            raise ProfileError(f"{where}: {exc}") from exc
        where = f"{where} ({mode.value}, {family.value})"
        if not isinstance(raw["feasible"], bool):
            raise ProfileError(f"{where}: feasible must be a boolean")
        anchors = []
        for j, a in enumerate(raw.get("anchors", [])):
            _check_keys(a, {"role", "latency_ms"}, set(Anchor._KEYS), f"{where}.anchors[{j}]")
            anchors.append(Anchor(**a))
        cells.append(
            ModeProfileCell(
                mode=mode,
                family=family,
                latency_speedup=_number(raw, "latency_speedup", where),
                energy_ratio=_number(raw, "energy_ratio", where),
                memory_ratio=_number(raw, "memory_ratio", where),
                quality_delta_pp=_number(raw, "quality_delta_pp", where),
                feasible=raw["feasible"],
                provenance=provenance,
                anchors=tuple(anchors),
            )
        )
    return ProfileTable.from_cells(cells, costs)


def load_profile(path) -> ProfileTable:
    path = Path(path)
    if not path.is_file():
        raise ProfileError(f"profile file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return profile_from_dict(data)


def save_profile(table: ProfileTable, path) -> None:
    Path(path).write_text(json.dumps(table.to_dict(), indent=2) + "\n", encoding="utf-8")


def default_profile_path() -> Path:
    env = os.environ.get(PROFILE_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("modeswitch") / "data" / "default_profile.json"))


def load_default_profile() -> ProfileTable:
    return load_profile(Path(str(resources.files("modeswitch") / "data" / "default_profile.json")))
