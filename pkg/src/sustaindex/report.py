"""Report assembly: scored ladders as JSON dicts, markdown, and CSV series.

Everything here is pure data-shaping: the numeric work lives in the
pillar/manifold/casting modules.  Output ordering is fully deterministic
(ladders sorted by key, rungs ascending) and every reported number traces
back to an input record or a fit.
"""

from __future__ import annotations

import csv
import io
import warnings
from typing import Any, Iterable

from .casting import estimate_cor
from .energy_model import EnergyModelFit
from .manifold import (
    PolicyWeights,
    aggregate_si,
    pareto_dominates,
    pillar_vector,
    si_deficit,
)
from .pillars import EconWeights, MetricWarning, TrustSpec, energy_index
from .telemetry import (
    PrecisionLadder,
    TelemetryRecord,
    build_ladders,
    derived_tps,
)

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "score_report",
    "cor_report",
    "fit_report",
    "render_markdown",
    "write_csv_series",
]

REPORT_SCHEMA_VERSION = "sustainability-report-v1"

CSV_SERIES = {
    "tps_by_precision.csv": ("model", "hardware", "task", "batch_size", "precision_bits", "tps"),
    "joules_by_precision.csv": (
        "model",
        "hardware",
        "task",
        "batch_size",
        "precision_bits",
        "joules_per_query",
    ),
    "pillars_by_precision.csv": (
        "model",
        "hardware",
        "task",
        "batch_size",
        "precision_bits",
        "trust",
        "econ",
        "energy",
        "si",
    ),
    "cor_by_batch.csv": ("model", "hardware", "task", "batch_size", "precision_bits", "cor"),
    "accuracy_by_batch.csv": (
        "model",
        "hardware",
        "task",
        "batch_size",
        "precision_bits",
        "accuracy",
    ),
}


def _key_dict(ladder: PrecisionLadder) -> dict[str, Any]:
    key = ladder.shared
    return {
        "model": key.model_name,
        "hardware": key.hardware,
        "batch_size": key.batch_size,
        "task": key.task,
    }


def score_report(
    records: Iterable[TelemetryRecord],
    weights: PolicyWeights = PolicyWeights(),
    *,
    reference_bits: int = 16,
    trust_spec: TrustSpec = TrustSpec(),
    econ_weights: EconWeights = EconWeights(),
    rectangle_rule: bool = False,
    meta: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Score every ladder in a record set under one weight policy."""
    ladders, unanchored = build_ladders(list(records), reference_bits=reference_bits)

    ladder_reports: list[dict[str, Any]] = []
    for ladder in ladders:
        reference = ladder.anchor
        rungs: list[dict[str, Any]] = []
        failed: dict[int, str] = {}
        si_by_bits: dict[int, float] = {}
        ref_vector = pillar_vector(reference, reference, trust_spec, econ_weights, rectangle_rule)
        for bits in ladder.precisions():
            record = ladder.rungs[bits]
            try:
                vector = pillar_vector(record, reference, trust_spec, econ_weights, rectangle_rule)
            except ValueError as exc:
                failed[bits] = str(exc)
                rungs.append(
                    {
                        "precision_bits": bits,
                        "error": str(exc),
                    }
                )
                continue
            energy = energy_index(record, reference, rectangle_rule)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", MetricWarning)
                si = aggregate_si(vector, weights)
            si_by_bits[bits] = si
            rungs.append(
                {
                    "precision_bits": bits,
                    "pillars": {
                        "trust": vector.trust,
                        "econ": vector.econ,
                        "energy": vector.energy,
                    },
                    "joules_per_query": energy.joules_per_query,
                    "caes": energy.caes,
                    "energy_mode": energy.mode,
                    "tps": derived_tps(record),
                    "si": si,
                    "bottleneck": weights.policy == "geometric" and 0.0 in vector.as_tuple(),
                    "dominated_by_reference": bits != reference_bits
                    and pareto_dominates(ref_vector, vector),
                }
            )
        ref_si = si_by_bits[reference_bits]
        for entry in rungs:
            if "si" in entry:
                entry["si_deficit"] = si_deficit(ref_si, entry["si"]) if ref_si > 0 else None

        # classification mirrors detect_trap; recomputed here from the same
        # slopes so the report needs no second pillar pass
        slopes = [
            (ref_si - si_by_bits[bits]) / (reference_bits - bits)
            for bits in si_by_bits
            if bits != reference_bits
        ]
        positive = [s for s in slopes if s > 1e-9]
        negative = [s for s in slopes if s < -1e-9]
        if positive and not negative and len(positive) == len(slopes):
            sign = "divergent"
        elif positive and negative:
            sign = "mixed"
        else:
            sign = "conforming"

        ladder_reports.append(
            {
                "key": _key_dict(ladder),
                "reference_bits": reference_bits,
                "rungs": rungs,
                "verdict": {
                    "gradient_sign": sign,
                    "dominated_rungs": sorted(
                        e["precision_bits"]
                        for e in rungs
                        if e.get("dominated_by_reference")
                    ),
                    "failed_rungs": [
                        {"precision_bits": bits, "error": message}
                        for bits, message in sorted(failed.items())
                    ],
                },
            }
        )

    report: dict[str, Any] = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "policy": {
            "weights": {
                "trust": weights.w_trust,
                "econ": weights.w_econ,
                "energy": weights.w_energy,
            },
            "policy": weights.policy,
            "alpha_efficiency": econ_weights.alpha_efficiency,
            "trust_aggregation": trust_spec.aggregation,
            "reference_bits": reference_bits,
            "rectangle_rule": rectangle_rule,
        },
        "ladders": ladder_reports,
        "unanchored": [
            {
                "model": r.config.model_name,
                "hardware": r.config.hardware,
                "precision_bits": r.config.precision_bits,
                "batch_size": r.config.batch_size,
                "task": r.config.task,
            }
            for r in unanchored
        ],
    }
    if meta is not None:
        report["meta"] = meta
    return report


def cor_report(
    records: Iterable[TelemetryRecord],
    *,
    reference_bits: int = 16,
    meta: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Casting overhead of every quantized rung against its ladder reference."""
    ladders, unanchored = build_ladders(list(records), reference_bits=reference_bits)
    estimates: list[dict[str, Any]] = []
    for ladder in ladders:
        reference = ladder.anchor
        for bits in ladder.precisions():
            if bits == reference_bits:
                continue
            est = estimate_cor(ladder.rungs[bits], reference)
            entry = _key_dict(ladder)
            entry.update(
                {
                    "precision_bits": bits,
                    "tps": derived_tps(ladder.rungs[bits]),
                    "reference_tps": derived_tps(reference),
                    "cor": est.cor,
                    "dominance": est.dominance,
                    "tau_comp_s": est.latency.tau_comp_s,
                    "tau_cast_s": est.latency.tau_cast_s,
                }
            )
            estimates.append(entry)
    report: dict[str, Any] = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "reference_bits": reference_bits,
        "estimates": estimates,
        "unanchored": [
            {
                "model": r.config.model_name,
                "hardware": r.config.hardware,
                "precision_bits": r.config.precision_bits,
                "batch_size": r.config.batch_size,
                "task": r.config.task,
            }
            for r in unanchored
        ],
    }
    if meta is not None:
        report["meta"] = meta
    return report


def fit_report(fit: EnergyModelFit, meta: dict[str, Any] | None = None) -> dict[str, Any]:
    """Serialized amortization-model fit with derived critical batches."""
    params = fit.params
    report: dict[str, Any] = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "fit": {
            "gamma_static": params.gamma_static,
            "alpha_mem": params.alpha_mem,
            "phi_by_precision": {str(k): v for k, v in sorted(params.phi_by_precision.items())},
            "native_bits": params.native_bits,
            "hops": params.hops,
            "hops_assumed": fit.hops_assumed,
            "residual_rms": fit.residual_rms,
            "n_points": fit.n_points,
            "condition_flag": fit.condition_flag,
        },
        "critical_batch_by_precision": {
            str(k): v for k, v in sorted(fit.bstar_by_precision().items())
        },
    }
    if meta is not None:
        report["meta"] = meta
    return report


def render_markdown(report: dict[str, Any]) -> str:
    """Human-readable scoring summary with the per-rung deficit table."""
    lines: list[str] = []
    policy = report["policy"]
    lines.append("# Sustainability scoring report")
    lines.append("")
    lines.append(
        "Policy: {policy} | weights trust/econ/energy = {t:g}/{e:g}/{s:g} "
        "| reference: {bits}-bit".format(
            policy=policy["policy"],
            t=policy["weights"]["trust"],
            e=policy["weights"]["econ"],
            s=policy["weights"]["energy"],
            bits=policy["reference_bits"],
        )
    )
    lines.append("")
    for ladder in report["ladders"]:
        key = ladder["key"]
        lines.append(
            f"## {key['model']} | {key['hardware']} | {key['task']} | batch {key['batch_size']}"
        )
        lines.append("")
        lines.append(f"Verdict: **{ladder['verdict']['gradient_sign']}**")
        lines.append("")
        lines.append("| precision | trust | econ | energy | SI | deficit vs ref |")
        lines.append("|---:|---:|---:|---:|---:|---:|")
        for rung in ladder["rungs"]:
            if "error" in rung:
                lines.append(f"| {rung['precision_bits']} | error: {rung['error']} | | | | |")
                continue
            pillars = rung["pillars"]
            deficit = rung.get("si_deficit")
            lines.append(
                "| {bits} | {t:.4f} | {e:.4f} | {s:.4f} | {si:.4f} | {d} |".format(
                    bits=rung["precision_bits"],
                    t=pillars["trust"],
                    e=pillars["econ"],
                    s=pillars["energy"],
                    si=rung["si"],
                    d="-" if deficit is None else f"{deficit:.4f}",
                )
            )
        lines.append("")
    if report.get("unanchored"):
        lines.append("Unanchored configurations (no reference rung):")
        for entry in report["unanchored"]:
            lines.append(
                f"- {entry['model']} | {entry['hardware']} | {entry['task']} | "
                f"{entry['precision_bits']}-bit | batch {entry['batch_size']}"
            )
        lines.append("")
    return "\n".join(lines)


def write_csv_series(
    score: dict[str, Any],
    cor: dict[str, Any],
    records: Iterable[TelemetryRecord],
) -> dict[str, str]:
    """Per-panel CSV series (returned as name -> CSV text).

    One file per plottable series: throughput, energy, pillar bars, COR by
    batch, and accuracy by batch.  Headers are fixed by CSV_SERIES.
    """
    records = list(records)
    outputs: dict[str, io.StringIO] = {}
    writers: dict[str, csv.writer] = {}
    for name, header in CSV_SERIES.items():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        outputs[name] = buf
        writers[name] = writer

    for ladder in score["ladders"]:
        key = ladder["key"]
        base = (key["model"], key["hardware"], key["task"], key["batch_size"])
        for rung in ladder["rungs"]:
            if "error" in rung:
                continue
            bits = rung["precision_bits"]
            writers["tps_by_precision.csv"].writerow(base + (bits, repr(rung["tps"])))
            writers["joules_by_precision.csv"].writerow(
                base + (bits, repr(rung["joules_per_query"]))
            )
            pillars = rung["pillars"]
            writers["pillars_by_precision.csv"].writerow(
                base
                + (
                    bits,
                    repr(pillars["trust"]),
                    repr(pillars["econ"]),
                    repr(pillars["energy"]),
                    repr(rung["si"]),
                )
            )

    for entry in cor["estimates"]:
        writers["cor_by_batch.csv"].writerow(
            (
                entry["model"],
                entry["hardware"],
                entry["task"],
                entry["batch_size"],
                entry["precision_bits"],
                repr(entry["cor"]),
            )
        )

    for record in sorted(
        records,
        key=lambda r: (
            r.config.model_name,
            r.config.hardware,
            r.config.task,
            r.config.batch_size,
            r.config.precision_bits,
        ),
    ):
        writers["accuracy_by_batch.csv"].writerow(
            (
                record.config.model_name,
                record.config.hardware,
                record.config.task,
                record.config.batch_size,
                record.config.precision_bits,
                repr(record.accuracy),
            )
        )

    return {name: buf.getvalue() for name, buf in outputs.items()}
