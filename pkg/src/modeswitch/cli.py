"""Command-line entry point: trace generation, routing, simulation, training, comparison.

Exit codes:
  0  success
  2  configuration error (bad flags, unreadable profile/config/model)
  3  data error (bad trace or dataset, simulation failure)
  4  quality gate failure (--quality-gate)
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import Counter
from pathlib import Path

from .classifier import ClassifierConfig, resolve_family
from .domain import DomainError, InferenceMode, WorkloadFamily, parse_family, parse_mode, read_trace, write_trace
from .learned import (
    LearnedPolicy,
    build_dataset,
    confusion_from_labels,
    confusion_matrix,
    load_model,
    read_dataset,
    save_model,
    stratified_split,
    train_forest,
    train_logistic,
    train_tree,
    write_confusion_csv,
    write_dataset,
)
from .policies import ConstraintSet, OraclePolicy, Policy, RulePolicy, StaticPolicy
from .profiles import ProfileError, default_profile_path, load_profile
from .sim import (
    compare_policies,
    energy_from_power_trace,
    markdown_summary,
    quality_gate_failures,
    read_power_trace,
    write_comparison_csv,
    write_per_family_csv,
)
from .workload import TraceSpec, balanced_family_trace, generate_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GATE = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# --- shared option handling ------------------------------------------------------------


def _family_counts(items) -> dict:
    counts = {}
    for item in items or ():
        name, _, n = item.partition("=")
        try:
            counts[parse_family(name)] = int(n)
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"bad family count {item!r}: expected Family=N") from exc
    return counts


def _load_config(args) -> tuple[ClassifierConfig, ConstraintSet]:
    classifier, constraints = {}, {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - {"classifier", "constraints"}
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        classifier = dict(data.get("classifier", {}))
        constraints = dict(data.get("constraints", {}))
    for flag, key in (("quality_floor", "quality_floor_pp"), ("energy_max", "energy_ratio_max"), ("memory_max", "memory_ratio_max")):
        value = getattr(args, flag, None)
        if value is not None:
            constraints[key] = value
    try:
        return ClassifierConfig(**classifier), ConstraintSet(**constraints)
    except TypeError as exc:
        raise ConfigError(f"bad config keys: {exc}") from exc
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _load_profile(args):
    path = Path(args.profile) if args.profile else default_profile_path()
    try:
        return load_profile(path)
    except ProfileError as exc:
        raise ConfigError(str(exc)) from exc


def _load_trace(path):
    if not Path(path).is_file():
        raise ConfigError(f"trace file not found: {path}")
    try:
        return read_trace(path)
    except DomainError as exc:
        raise DataError(str(exc)) from exc


def build_policy(spec: str, table, constraints: ConstraintSet, config: ClassifierConfig) -> Policy:
    """fp16 | rule | oracle | static:<mode> | tree:<path> | forest:<path> | logistic:<path>"""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "fp16" and not arg:
        return StaticPolicy(InferenceMode.FP16)
    if kind == "rule" and not arg:
        return RulePolicy(config)
    if kind == "oracle" and not arg:
        return OraclePolicy(table, constraints, config=config)
    if kind == "static" and arg:
        try:
            return StaticPolicy(parse_mode(arg))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
    if kind in ("tree", "forest", "logistic") and arg:
        try:
            return LearnedPolicy(load_model(arg, expected_kind=kind))
        except (DomainError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unrecognised policy {spec!r}")


def _policies_from_args(args, table, constraints, config) -> list[Policy]:
    specs = []
    for item in args.policy or ():
        specs.extend(s for s in item.split(",") if s.strip())
    if not specs:
        raise ConfigError("at least one --policy is required")
    policies = [build_policy(s.strip(), table, constraints, config) for s in specs]
    names = Counter(p.name for p in policies)
    for p, spec in zip(policies, specs):
        if names[p.name] > 1:
            p.name = spec.strip()
    return policies


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands ----------------------------------------------------------------------------


def cmd_gen_trace(args) -> int:
    counts = _family_counts(args.family)
    if args.balanced is not None:
        if counts:
            raise ConfigError("--balanced and --family are mutually exclusive")
        counts = {f: args.balanced for f in WorkloadFamily}
    if not counts and not args.batched:
        raise ConfigError("nothing to generate: pass --balanced N or --family F=N")
    try:
        spec = TraceSpec(counts, args.jitter, args.seed, args.batch_pressure, _family_counts(args.batched))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    trace = generate_trace(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out)
    Path(str(out) + ".meta.json").write_text(json.dumps(spec.metadata(), indent=2) + "\n", encoding="utf-8")
    hist = Counter(r.workload_tag for r in trace)
    print(f"wrote {len(trace)} requests to {out}")
    for family in WorkloadFamily:
        if hist[family]:
            print(f"  {family.value:<28} {hist[family]}")
    return EXIT_OK


def cmd_route(args) -> int:
    config, constraints = _load_config(args)
    table = _load_profile(args)
    trace = _load_trace(args.trace)
    if len(args.policy) != 1 or "," in args.policy[0]:
        raise ConfigError("route takes exactly one --policy")
    policy = build_policy(args.policy[0], table, constraints, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    hist: dict = {}
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for req in trace:
            d = policy.decide(req)
            fh.write(
                json.dumps(
                    {"request_id": req.request_id, "mode": d.mode.value, "reason": d.reason.value, "overhead_ms": d.overhead_ms}
                )
                + "\n"
            )
            family = resolve_family(req, config)
            hist.setdefault(family, Counter())[d.mode] += 1
    hist_path = out.with_name(out.stem + "_histogram.csv")
    modes = [m for m in InferenceMode if any(m in c for c in hist.values())]
    with open(hist_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family"] + [m.value for m in modes])
        for family in WorkloadFamily:
            if family in hist:
                w.writerow([family.value] + [hist[family][m] for m in modes])
    print(f"routed {len(trace)} requests with {policy.name}; decisions in {out}")
    for family in WorkloadFamily:
        if family in hist:
            summary = ", ".join(f"{m.value}={n}" for m, n in sorted(hist[family].items(), key=lambda kv: kv[0].order))
            print(f"  {family.value:<28} {summary}")
    return EXIT_OK


def _run_comparison(args, policies, table, constraints, config, trace):
    try:
        return compare_policies(trace, policies, table, None, constraints, args.fallback, config)
    except DomainError as exc:
        raise DataError(str(exc)) from exc


def _gate(args, reports, constraints) -> int:
    if not args.quality_gate:
        return EXIT_OK
    status = EXIT_OK
    for report in reports:
        failures = quality_gate_failures(report, constraints)
        for family, delta in failures:
            print(
                f"QUALITY GATE FAILED: {report.policy} on {family.value}: mean delta {delta:+.2f} pp "
                f"< floor {constraints.quality_floor_pp:+.2f} pp",
                file=sys.stderr,
            )
        if failures:
            status = EXIT_GATE
    if status == EXIT_OK:
        print("quality gate passed")
    return status


def _write_request_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["request_id", "family", "decision_mode", "executed_mode", "reason", "overhead_ms", "fp16_latency_ms",
             "mode_latency_ms", "speedup", "energy_ratio", "memory_ratio", "quality_delta_pp",
             "constraint_violated", "synthesized_cell", "fallback_used"]
        )
        for r in report.results:
            w.writerow(
                [r.request_id, r.family.value, r.decision.mode.value, r.mode.value, r.decision.reason.value,
                 repr(r.decision.overhead_ms), repr(r.fp16_latency_ms), repr(r.mode_latency_ms), repr(r.speedup),
                 r.energy_ratio, r.memory_ratio, r.quality_delta_pp, int(r.constraint_violated),
                 int(r.provenance_flag), int(r.fallback_used)]
            )


def cmd_simulate(args) -> int:
    config, constraints = _load_config(args)
    table = _load_profile(args)
    trace = _load_trace(args.trace)
    policies = _policies_from_args(args, table, constraints, config)
    if len(policies) != 1:
        raise ConfigError("simulate takes exactly one --policy; use compare for several")
    comparison = _run_comparison(args, policies, table, constraints, config, trace)
    out = _out_dir(args)
    write_comparison_csv(comparison, out / "comparison.csv")
    write_per_family_csv(comparison.reports, out / "per_family.csv")
    _write_request_csv(comparison.reports[0], out / "requests.csv")
    summary = markdown_summary(comparison)
    (out / "summary.md").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return _gate(args, comparison.reports, constraints)


def cmd_compare(args) -> int:
    config, constraints = _load_config(args)
    table = _load_profile(args)
    trace = _load_trace(args.trace)
    policies = _policies_from_args(args, table, constraints, config)
    comparison = _run_comparison(args, policies, table, constraints, config, trace)
    out = _out_dir(args)
    write_comparison_csv(comparison, out / "comparison.csv")
    write_per_family_csv(comparison.reports, out / "per_family.csv")
    oracle_modes = [r.decision.mode for r in comparison.oracle.results]
    for policy, report in zip(policies, comparison.reports):
        if isinstance(policy, LearnedPolicy):
            cm = confusion_from_labels(oracle_modes, [r.decision.mode for r in report.results])
            write_confusion_csv(cm, out / f"confusion_{policy.name.replace(':', '_').replace('/', '_')}.csv")
    summary = markdown_summary(comparison)
    (out / "summary.md").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return _gate(args, comparison.reports, constraints)


def cmd_build_dataset(args) -> int:
    config, constraints = _load_config(args)
    table = _load_profile(args)
    trace = _load_trace(args.trace)
    labeler = None if args.labeler == "oracle" else build_policy(args.labeler, table, constraints, config)
    try:
        rows = build_dataset(trace, table, constraints, labeler)
    except DomainError as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(rows, out)
    hist = Counter(r.label for r in rows)
    print(f"wrote {len(rows)} rows to {out}")
    for mode, n in sorted(hist.items(), key=lambda kv: kv[0].order):
        print(f"  {mode.value:<28} {n}")
    return EXIT_OK


def cmd_train(args) -> int:
    if not Path(args.dataset).is_file():
        raise ConfigError(f"dataset file not found: {args.dataset}")
    try:
        rows = read_dataset(args.dataset)
        train_rows, test_rows = stratified_split(rows, args.test_fraction, args.seed)
        if args.model == "tree":
            model = train_tree(train_rows, args.max_depth, args.min_samples_split, args.seed)
        elif args.model == "forest":
            model = train_forest(
                train_rows, args.n_trees, args.features_per_split, args.seed, args.max_depth, args.min_samples_split
            )
        else:
            model = train_logistic(train_rows, args.learning_rate, args.iterations, args.l2)
    except DomainError as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    train_cm = confusion_matrix(model, train_rows)
    print(f"wrote {args.model} model to {out}")
    print(f"train accuracy {train_cm.accuracy:.4f} on {len(train_rows)} rows")
    if test_rows:
        test_cm = confusion_matrix(model, test_rows)
        write_confusion_csv(test_cm, out.with_name(out.stem + "_confusion.csv"))
        print(f"test accuracy  {test_cm.accuracy:.4f} on {len(test_rows)} rows")
        print("confusion (rows = oracle, cols = predicted):")
        print(test_cm.counts)
    return EXIT_OK


def cmd_energy(args) -> int:
    if not Path(args.power_trace).is_file():
        raise ConfigError(f"power trace not found: {args.power_trace}")
    try:
        value = energy_from_power_trace(read_power_trace(args.power_trace), args.tokens)
    except DomainError as exc:
        raise DataError(str(exc)) from exc
    print(f"{value:.6f} J/token")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", help="profile JSON (default: $MODESWITCH_PROFILE or the shipped profile)")
    p.add_argument("--config", help="JSON with optional 'classifier' and 'constraints' objects")
    p.add_argument("--quality-floor", type=float, help="minimum quality delta in pp (default -1.5)")
    p.add_argument("--energy-max", type=float, help="maximum energy ratio (default 1.0)")
    p.add_argument("--memory-max", type=float, help="maximum memory ratio (default 1.10)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeswitch",
        description="Per-request inference-mode routing and profile-driven serving simulation.",
        epilog="exit codes: 0 ok, 2 config error, 3 data error, 4 quality gate failure",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a seeded synthetic trace")
    p.add_argument("--balanced", type=int, metavar="N", help="N requests for each of the 11 families")
    p.add_argument("--family", action="append", metavar="FAMILY=N", help="per-family count (repeatable)")
    p.add_argument("--batched", action="append", metavar="FAMILY=N", help="extra batched requests (repeatable)")
    p.add_argument("--batch-pressure", type=int, default=4)
    p.add_argument("--jitter", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="trace.jsonl")
    p.set_defaults(func=cmd_gen_trace)

    policy_help = "fp16 | rule | oracle | static:<mode> | tree:<path> | forest:<path> | logistic:<path>"

    p = sub.add_parser("route", help="route every request and write one decision per line")
    _add_common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", action="append", required=True, help=policy_help)
    p.add_argument("--out", default="decisions.jsonl")
    p.set_defaults(func=cmd_route)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "simulate one policy over a trace"),
        ("compare", cmd_compare, "compare several policies against the oracle"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--trace", required=True)
        p.add_argument("--policy", "--policies", action="append", dest="policy", help=policy_help + " (repeatable or comma-separated)")
        p.add_argument("--quality-gate", action="store_true", help="exit 4 if a benchmark family's mean delta is below the floor")
        p.add_argument("--fallback", action="store_true", help="run FP16 instead of failing on missing/infeasible cells")
        p.add_argument("--out", default="report")
        p.set_defaults(func=func)

    p = sub.add_parser("build-dataset", help="label a tagged trace for router training")
    _add_common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--labeler", default="oracle", help="oracle (default) or any policy spec, e.g. rule")
    p.add_argument("--out", default="dataset.jsonl")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train a learned router")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("tree", "forest", "logistic"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--n-trees", type=int, default=50)
    p.add_argument("--features-per-split", type=int)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("energy", help="joules per token from a timestamp_ms,power_w CSV")
    p.add_argument("--power-trace", required=True)
    p.add_argument("--tokens", type=int, required=True)
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
