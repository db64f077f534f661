"""Command-line interface.

Subcommands:

    validate  check telemetry files against the schema
    score     pillar indices, sustainability index, and trap verdicts
    cor       casting overhead ratios, with optional batch projections
    fit       fit the batch-amortization energy model to a corpus
    bstar     critical batch sizes (and gradients) from model parameters
    simulate  run a scenario, optionally with closed-form verification
    report    full report in json / markdown / csv-series form

Exit codes: 0 clean, 1 validation failure, 2 analysis refused
(unanchored or underdetermined input under --strict, usage errors),
3 I/O failure.

Default pillar weights can be supplied by the SUSTAINDEX_WEIGHTS
environment variable pointing at a JSON file such as
{"w_trust": 0.34, "w_econ": 0.33, "w_energy": 0.33, "policy": "linear"}.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .casting import cor_at_batch
from .energy_model import (
    EnergyParams,
    FitError,
    critical_batch,
    energy_eval,
    energy_gradient_p,
    fit_energy_model,
)
from .manifold import PolicyWeights
from .pillars import EconWeights, MetricWarning, TrustSpec
from .report import (
    cor_report,
    fit_report,
    render_markdown,
    score_report,
    write_csv_series,
)
from .simulator import load_scenario, simulate, verify_theorems
from .telemetry import (
    LadderError,
    SchemaError,
    TelemetryWarning,
    dump_telemetry,
    load_corpus,
    load_telemetry,
)

__all__ = ["main", "OPERATION_COVERAGE"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_REFUSED = 2
EXIT_IO = 3

WEIGHTS_ENV_VAR = "SUSTAINDEX_WEIGHTS"

# Which CLI command exercises each public library operation; the test
# suite audits this table against the package's public API.
OPERATION_COVERAGE = {
    "load_telemetry": "validate",
    "load_corpus": "score",
    "dump_telemetry": "simulate",
    "build_ladders": "score",
    "derived_tps": "score",
    "trust_index": "score",
    "economic_index": "score",
    "energy_per_query": "score",
    "energy_index": "score",
    "aggregate_si": "score",
    "detect_trap": "score",
    "pareto_dominates": "score",
    "si_deficit": "score",
    "latency_per_hop": "cor",
    "estimate_cor": "cor",
    "cor_at_batch": "cor",
    "classify_dominance": "cor",
    "pillar_vector": "score",
    "energy_eval": "bstar",
    "critical_batch": "bstar",
    "energy_gradient_p": "bstar",
    "fit_energy_model": "fit",
    "simulate": "simulate",
    "verify_theorems": "simulate",
    "score_report": "score",
    "cor_report": "cor",
    "fit_report": "fit",
    "render_markdown": "report",
    "write_csv_series": "report",
    "load_scenario": "simulate",
    "record_to_dict": "validate",
    "record_from_dict": "validate",
}


def _emit(payload: dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True))
    sys.stdout.write("\n")


def _meta(args: argparse.Namespace, inputs: list[str]) -> dict[str, Any] | None:
    if getattr(args, "no_meta", False):
        return None
    return {
        "tool": "sustaindex",
        "tool_version": __version__,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "inputs": inputs,
    }


def _parse_weights(args: argparse.Namespace) -> PolicyWeights:
    policy = getattr(args, "policy", "linear")
    spec = getattr(args, "weights", None)
    if spec is not None:
        parts = [float(x) for x in spec.split(",")]
        if len(parts) != 3:
            raise ValueError("--weights expects three comma-separated values: trust,econ,energy")
        return PolicyWeights(*parts, policy=policy)
    env_path = os.environ.get(WEIGHTS_ENV_VAR)
    if env_path:
        with open(env_path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return PolicyWeights(
            w_trust=float(obj.get("w_trust", 0.34)),
            w_econ=float(obj.get("w_econ", 0.33)),
            w_energy=float(obj.get("w_energy", 0.33)),
            policy=obj.get("policy", policy),
        )
    return PolicyWeights(policy=policy)


def _load_inputs(paths: Sequence[str]) -> list:
    return load_corpus(paths)


# --- subcommand handlers -------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    clean = True
    breakdown: list[dict[str, Any]] = []
    for raw in args.paths:
        path = Path(raw)
        try:
            records = load_telemetry(path)
        except SchemaError as exc:
            clean = False
            breakdown.append({"path": str(path), "ok": False, "error": str(exc)})
            continue
        breakdown.append({"path": str(path), "ok": True, "records": len(records)})
    _emit({"ok": clean, "files": breakdown})
    return EXIT_OK if clean else EXIT_INVALID


def cmd_score(args: argparse.Namespace) -> int:
    records = _load_inputs(args.paths)
    weights = _parse_weights(args)
    report = score_report(
        records,
        weights,
        reference_bits=args.reference_bits,
        trust_spec=TrustSpec(aggregation=args.trust_aggregation),
        econ_weights=EconWeights(alpha_efficiency=args.alpha_efficiency),
        rectangle_rule=args.rectangle_rule,
        meta=_meta(args, list(args.paths)),
    )
    _emit(report)
    if args.strict and report["unanchored"]:
        return EXIT_REFUSED
    return EXIT_OK


def cmd_cor(args: argparse.Namespace) -> int:
    records = _load_inputs(args.paths)
    report = cor_report(
        records,
        reference_bits=args.reference_bits,
        meta=_meta(args, list(args.paths)),
    )
    if args.project_batches:
        batches = [int(b) for b in args.project_batches.split(",")]
        for entry in report["estimates"]:
            # reference per-token latency is the native compute cost; the
            # measured casting residual amortizes across projected batches
            projections = {
                str(b): cor_at_batch(
                    entry["tau_cast_s"] * entry["batch_size"], entry["tau_comp_s"], b
                )
                for b in batches
            }
            entry["cor_projected"] = projections
    _emit(report)
    if args.strict and report["unanchored"]:
        return EXIT_REFUSED
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    records = _load_inputs(args.paths)
    fit = fit_energy_model(
        records,
        native_bits=args.reference_bits,
        hops=args.hops,
        rectangle_rule=args.rectangle_rule,
    )
    _emit(fit_report(fit, meta=_meta(args, list(args.paths))))
    return EXIT_OK


def _params_from_file(path: str) -> EnergyParams:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return EnergyParams(
        gamma_static=float(obj["gamma_static"]),
        alpha_mem=float(obj["alpha_mem"]),
        phi_by_precision={int(k): float(v) for k, v in obj["phi_by_precision"].items()},
        native_bits=int(obj.get("native_bits", 16)),
        hops=int(obj.get("hops", 1)),
    )


def cmd_bstar(args: argparse.Namespace) -> int:
    params = _params_from_file(args.params)
    out: dict[str, Any] = {"native_bits": params.native_bits, "rungs": {}}
    for bits in params.precisions():
        if bits >= params.native_bits:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MetricWarning)
            bstar = critical_batch(params, bits)
        entry: dict[str, Any] = {
            "critical_batch": bstar,
            "native_support": params.phi(bits) == 0.0,
        }
        if bstar > 0:
            entry["joules_at_critical_batch"] = {
                "quantized": energy_eval(params, bits, bstar),
                "native": energy_eval(params, params.native_bits, bstar),
            }
        if args.batch is not None:
            entry["energy_gradient_at_batch"] = energy_gradient_p(params, bits, args.batch)
        out["rungs"][str(bits)] = entry
    meta = _meta(args, [args.params])
    if meta is not None:
        out["meta"] = meta
    _emit(out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    output = simulate(scenario)
    if args.out:
        dump_telemetry(output.records, args.out)
    payload: dict[str, Any] = {
        "records": len(output.records),
        "cells": [[p, b] for p, b in scenario.cells()],
        "out": args.out,
    }
    if args.verify:
        payload["verification"] = verify_theorems(scenario).to_json_dict()
    meta = _meta(args, [args.scenario])
    if meta is not None:
        payload["meta"] = meta
    _emit(payload)
    if args.verify and payload["verification"]["overall"] == "fail":
        return EXIT_REFUSED
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = _load_inputs(args.paths)
    if not records:
        warnings.warn("no records loaded; emitting an empty report", TelemetryWarning)
    weights = _parse_weights(args)
    meta = _meta(args, list(args.paths))
    score = score_report(
        records,
        weights,
        reference_bits=args.reference_bits,
        trust_spec=TrustSpec(aggregation=args.trust_aggregation),
        econ_weights=EconWeights(alpha_efficiency=args.alpha_efficiency),
        rectangle_rule=args.rectangle_rule,
        meta=meta,
    )
    if args.format == "json":
        _emit(score)
        return EXIT_OK
    if args.format == "markdown":
        sys.stdout.write(render_markdown(score))
        sys.stdout.write("\n")
        return EXIT_OK
    # csv-series
    cor = cor_report(records, reference_bits=args.reference_bits)
    series = write_csv_series(score, cor, records)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(series.items()):
        target = outdir / name
        target.write_text(text, encoding="utf-8")
        written.append(str(target))
    _emit({"written": written})
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_corpus_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("paths", nargs="+", help="telemetry files (JSONL/CSV) or directories")
    parser.add_argument("--reference-bits", type=int, default=16)
    parser.add_argument("--strict", action="store_true", help="refuse analysis on unanchored input")
    parser.add_argument("--no-meta", action="store_true", help="omit provenance for byte-stable output")


def _add_policy_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--weights", help="comma triple trust,econ,energy (must sum to 1)")
    parser.add_argument("--policy", choices=("linear", "geometric"), default="linear")
    parser.add_argument("--alpha-efficiency", type=float, default=0.5)
    parser.add_argument("--trust-aggregation", default="accuracy")
    parser.add_argument(
        "--rectangle-rule",
        action="store_true",
        help="integrate power traces with left rectangles instead of trapezoids",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sustaindex",
        description="Sustainability analytics for LLM inference telemetry.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate telemetry files against the schema")
    p.add_argument("paths", nargs="+")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("score", help="pillar indices, SI, and trap verdicts")
    _add_corpus_args(p)
    _add_policy_args(p)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("cor", help="casting overhead ratios")
    _add_corpus_args(p)
    p.add_argument("--project-batches", help="comma list of batch sizes to project COR onto")
    p.set_defaults(handler=cmd_cor)

    p = sub.add_parser("fit", help="fit the batch-amortization energy model")
    _add_corpus_args(p)
    p.add_argument("--hops", type=int, help="hops per query; defaults to mean tokens per query")
    p.add_argument(
        "--rectangle-rule",
        action="store_true",
        help="integrate power traces with left rectangles instead of trapezoids",
    )
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("bstar", help="critical batch sizes from model parameters")
    p.add_argument("--params", required=True, help="JSON file with the energy-model parameters")
    p.add_argument("--batch", type=int, help="also report the precision gradient at this batch")
    p.add_argument("--no-meta", action="store_true")
    p.set_defaults(handler=cmd_bstar)

    p = sub.add_parser("simulate", help="run a scenario; optionally verify closed forms")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="write simulated telemetry JSONL here")
    p.add_argument("--verify", action="store_true", help="check output against closed forms")
    p.add_argument("--no-meta", action="store_true")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("report", help="full report in json/markdown/csv-series form")
    _add_corpus_args(p)
    _add_policy_args(p)
    p.add_argument("--format", choices=("json", "markdown", "csv-series"), default="json")
    p.add_argument("--outdir", default="series", help="output directory for csv-series")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SchemaError as exc:
        print(f"invalid telemetry: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FitError, LadderError) as exc:
        print(f"analysis refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"analysis refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    raise SystemExit(main())
