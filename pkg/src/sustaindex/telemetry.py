"""Telemetry data model, validation, and JSONL/CSV ingestion.

One record describes one measured inference configuration: identity
(model, hardware, precision, batch size, task) plus the raw evidence
needed downstream (tokens, wall-clock duration, accuracy, peak VRAM,
power evidence, optional grid carbon intensity).

The canonical on-disk format is JSONL, one record per line:

    {"model": str, "hardware": str, "precision_bits": int,
     "batch_size": int, "task": str, "total_tokens": int,
     "duration_s": float, "sample_count": int, "accuracy": float,
     "peak_vram_gb": float, "power": {"kind": "tdp"|"trace"|"joules", ...},
     "grid_gco2_per_kwh": float?, "source": str?}

Power payloads by kind:

    {"kind": "tdp",    "tdp_watts": 400.0}
    {"kind": "trace",  "samples": [[0.0, 98.2], [0.1, 101.7], ...]}
    {"kind": "joules", "joules_per_query": 235.47}

Units are part of the schema (seconds, Watts, Joules, gigabytes); no unit
inference is performed.  ``grid_gco2_per_kwh`` is grams CO2e per kWh on
disk and exposed in memory as kg CO2e per kWh.  CSV import is a lossy
convenience path: it cannot carry power traces.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

__all__ = [
    "ConfigId",
    "LadderKey",
    "TdpAnchor",
    "SampledTrace",
    "DirectJoules",
    "PowerEvidence",
    "TelemetryRecord",
    "PrecisionLadder",
    "SchemaError",
    "LadderError",
    "TelemetryWarning",
    "load_telemetry",
    "load_corpus",
    "dump_telemetry",
    "record_to_dict",
    "record_from_dict",
    "build_ladders",
    "derived_tps",
]

DEFAULT_REFERENCE_BITS = 16


class SchemaError(ValueError):
    """A record violates the telemetry schema.  Carries file/line context."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(f"{prefix}{message}")


class LadderError(ValueError):
    """Records cannot be grouped into a coherent precision ladder."""


class TelemetryWarning(UserWarning):
    """Non-fatal data quality condition (empty file, zero tokens, ...)."""


@dataclass(frozen=True)
class ConfigId:
    """Identity of a measured configuration."""

    model_name: str
    hardware: str
    precision_bits: int
    batch_size: int
    task: str

    def __post_init__(self) -> None:
        for name in ("model_name", "hardware", "task"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{name} must be a non-empty string")
        if not isinstance(self.precision_bits, int) or self.precision_bits < 1:
            raise ValueError("precision_bits must be a positive integer")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")

    def ladder_key(self) -> "LadderKey":
        return LadderKey(self.model_name, self.hardware, self.batch_size, self.task)


@dataclass(frozen=True)
class LadderKey:
    """Grouping key for a precision ladder: everything but the precision."""

    model_name: str
    hardware: str
    batch_size: int
    task: str

    def as_tuple(self) -> tuple[str, str, int, str]:
        return (self.model_name, self.hardware, self.batch_size, self.task)


@dataclass(frozen=True)
class TdpAnchor:
    """Constant-power assumption: the device ran at its TDP for the run."""

    tdp_watts: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.tdp_watts) or self.tdp_watts <= 0:
            raise ValueError("tdp_watts must be finite and > 0")


@dataclass(frozen=True)
class SampledTrace:
    """Sampled instantaneous power: (time offset in seconds, Watts) pairs."""

    samples: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.samples) == 0:
            raise ValueError("power trace must contain at least one sample")
        last_t = -math.inf
        for t, w in self.samples:
            if not (math.isfinite(t) and math.isfinite(w)):
                raise ValueError("power trace contains non-finite values")
            if t < 0:
                raise ValueError("power trace offsets must be >= 0")
            if t <= last_t:
                raise ValueError("power trace offsets must be strictly increasing")
            if w < 0:
                raise ValueError("power trace wattage must be >= 0")
            last_t = t


@dataclass(frozen=True)
class DirectJoules:
    """Pre-integrated energy: Joules per query, measured upstream."""

    joules_per_query: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.joules_per_query) or self.joules_per_query < 0:
            raise ValueError("joules_per_query must be finite and >= 0")


PowerEvidence = TdpAnchor | SampledTrace | DirectJoules


@dataclass(frozen=True)
class TelemetryRecord:
    """One measured inference configuration with its raw evidence."""

    config: ConfigId
    total_tokens: int
    duration_s: float
    sample_count: int
    accuracy: float
    peak_vram_gb: float
    power: PowerEvidence
    grid_kgco2_per_kwh: float | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.total_tokens, int) or self.total_tokens < 0:
            raise ValueError("total_tokens must be an integer >= 0")
        if not math.isfinite(self.duration_s) or self.duration_s <= 0:
            raise ValueError("duration_s must be finite and > 0")
        if not isinstance(self.sample_count, int) or self.sample_count < 1:
            raise ValueError("sample_count must be an integer >= 1")
        if not math.isfinite(self.accuracy) or not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")
        if not math.isfinite(self.peak_vram_gb) or self.peak_vram_gb <= 0:
            raise ValueError("peak_vram_gb must be finite and > 0")
        if self.grid_kgco2_per_kwh is not None:
            if not math.isfinite(self.grid_kgco2_per_kwh) or self.grid_kgco2_per_kwh < 0:
                raise ValueError("grid carbon intensity must be finite and >= 0")


@dataclass(frozen=True)
class PrecisionLadder:
    """Records sharing (model, hardware, batch, task), indexed by precision."""

    shared: LadderKey
    rungs: Mapping[int, TelemetryRecord]
    reference_bits: int = DEFAULT_REFERENCE_BITS

    def __post_init__(self) -> None:
        if len(self.rungs) < 2:
            raise LadderError("a precision ladder needs at least two rungs")
        if self.reference_bits not in self.rungs:
            raise LadderError(
                f"ladder {self.shared} lacks the {self.reference_bits}-bit reference rung"
            )
        for bits, record in self.rungs.items():
            if record.config.precision_bits != bits:
                raise LadderError("rung index disagrees with record precision")
            if record.config.ladder_key() != self.shared:
                raise LadderError("rung does not share the ladder key")

    @property
    def anchor(self) -> TelemetryRecord:
        return self.rungs[self.reference_bits]

    def precisions(self) -> list[int]:
        """Rung precisions in ascending bit order."""
        return sorted(self.rungs)


# --- scalar derivations ---------------------------------------------------


def derived_tps(record: TelemetryRecord) -> float:
    """Tokens per second: total_tokens / duration_s.

    Zero generated tokens yields 0.0 with a warning instead of an error so
    that degenerate runs remain loadable.
    """
    if record.total_tokens == 0:
        warnings.warn(
            f"record {record.config} produced no tokens; throughput treated as 0",
            TelemetryWarning,
            stacklevel=2,
        )
        return 0.0
    return record.total_tokens / record.duration_s


# --- JSON (de)serialization ------------------------------------------------


def _power_to_dict(power: PowerEvidence) -> dict[str, Any]:
    if isinstance(power, TdpAnchor):
        return {"kind": "tdp", "tdp_watts": power.tdp_watts}
    if isinstance(power, SampledTrace):
        return {"kind": "trace", "samples": [[t, w] for t, w in power.samples]}
    return {"kind": "joules", "joules_per_query": power.joules_per_query}


def record_to_dict(record: TelemetryRecord) -> dict[str, Any]:
    """Serialize a record to its canonical JSONL dict (wire field names)."""
    out: dict[str, Any] = {
        "model": record.config.model_name,
        "hardware": record.config.hardware,
        "precision_bits": record.config.precision_bits,
        "batch_size": record.config.batch_size,
        "task": record.config.task,
        "total_tokens": record.total_tokens,
        "duration_s": record.duration_s,
        "sample_count": record.sample_count,
        "accuracy": record.accuracy,
        "peak_vram_gb": record.peak_vram_gb,
        "power": _power_to_dict(record.power),
    }
    if record.grid_kgco2_per_kwh is not None:
        # stored in grams per kWh on the wire
        out["grid_gco2_per_kwh"] = record.grid_kgco2_per_kwh * 1000.0
    if record.source is not None:
        out["source"] = record.source
    return out


_REQUIRED_FIELDS = (
    "model",
    "hardware",
    "precision_bits",
    "batch_size",
    "task",
    "total_tokens",
    "duration_s",
    "sample_count",
    "accuracy",
    "peak_vram_gb",
    "power",
)
_OPTIONAL_FIELDS = ("grid_gco2_per_kwh", "source")


def _expect_int(obj: Mapping[str, Any], key: str) -> int:
    value = obj[key]
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"field '{key}' must be an integer, got {value!r}")
    return value


def _expect_float(obj: Mapping[str, Any], key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"field '{key}' must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"field '{key}' must be finite, got {value!r}")
    return value


def _expect_str(obj: Mapping[str, Any], key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(f"field '{key}' must be a string, got {value!r}")
    return value


def _power_from_dict(payload: Any) -> PowerEvidence:
    if not isinstance(payload, dict) or "kind" not in payload:
        raise SchemaError("field 'power' must be an object with a 'kind'")
    kind = payload["kind"]
    try:
        if kind == "tdp":
            return TdpAnchor(tdp_watts=_expect_float(payload, "tdp_watts"))
        if kind == "trace":
            samples = payload.get("samples")
            if not isinstance(samples, list):
                raise SchemaError("trace power needs a 'samples' list")
            pairs = []
            for entry in samples:
                if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                    raise SchemaError("trace samples must be [t_offset_s, watts] pairs")
                pairs.append((float(entry[0]), float(entry[1])))
            return SampledTrace(samples=tuple(pairs))
        if kind == "joules":
            return DirectJoules(joules_per_query=_expect_float(payload, "joules_per_query"))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"invalid power payload: {exc}") from exc
    raise SchemaError(f"unknown power kind {kind!r} (expected tdp|trace|joules)")


def record_from_dict(obj: Mapping[str, Any]) -> TelemetryRecord:
    """Parse one canonical JSONL dict into a TelemetryRecord."""
    if not isinstance(obj, Mapping):
        raise SchemaError("record must be a JSON object")
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise SchemaError(f"missing required field '{key}'")
    unknown = set(obj) - set(_REQUIRED_FIELDS) - set(_OPTIONAL_FIELDS)
    if unknown:
        raise SchemaError(f"unknown fields {sorted(unknown)}")

    config = ConfigId(
        model_name=_expect_str(obj, "model"),
        hardware=_expect_str(obj, "hardware"),
        precision_bits=_expect_int(obj, "precision_bits"),
        batch_size=_expect_int(obj, "batch_size"),
        task=_expect_str(obj, "task"),
    )
    grid = None
    if "grid_gco2_per_kwh" in obj and obj["grid_gco2_per_kwh"] is not None:
        grid = _expect_float(obj, "grid_gco2_per_kwh") / 1000.0
    source = None
    if "source" in obj and obj["source"] is not None:
        source = _expect_str(obj, "source")
    try:
        return TelemetryRecord(
            config=config,
            total_tokens=_expect_int(obj, "total_tokens"),
            duration_s=_expect_float(obj, "duration_s"),
            sample_count=_expect_int(obj, "sample_count"),
            accuracy=_expect_float(obj, "accuracy"),
            peak_vram_gb=_expect_float(obj, "peak_vram_gb"),
            power=_power_from_dict(obj["power"]),
            grid_kgco2_per_kwh=grid,
            source=source,
        )
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


# --- file I/O ----------------------------------------------------------------


def load_telemetry(path: str | Path, fmt: str | None = None) -> list[TelemetryRecord]:
    """Load records from a JSONL or CSV file, in file order.

    The format is inferred from the extension unless ``fmt`` is given
    ('jsonl' or 'csv').  Any schema violation raises SchemaError naming the
    offending field and line; duplicate configurations within one file are
    rejected.  An empty file yields an empty list with a warning.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unknown telemetry format {fmt!r}")

    if fmt == "csv":
        records = _load_csv(path)
    else:
        records = _load_jsonl(path)

    if not records:
        warnings.warn(f"{path}: no telemetry records found", TelemetryWarning, stacklevel=2)
        return records

    seen: dict[ConfigId, int] = {}
    for lineno, record in records_with_positions(records):
        if record.config in seen:
            raise SchemaError(
                f"duplicate configuration {record.config} "
                f"(first seen at entry {seen[record.config]})",
                path=str(path),
                line=lineno,
            )
        seen[record.config] = lineno
    return records


def records_with_positions(
    records: Iterable[TelemetryRecord],
) -> Iterable[tuple[int, TelemetryRecord]]:
    """1-based enumeration helper shared by loaders and validators."""
    return enumerate(records, start=1)


def _load_jsonl(path: Path) -> list[TelemetryRecord]:
    records: list[TelemetryRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", path=str(path), line=lineno) from exc
            try:
                records.append(record_from_dict(obj))
            except SchemaError as exc:
                raise SchemaError(str(exc), path=str(path), line=lineno) from exc
    return records


_CSV_POWER_COLUMNS = ("power_kind", "tdp_watts", "joules_per_query")


def _load_csv(path: Path) -> list[TelemetryRecord]:
    records: list[TelemetryRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):  # header is line 1
            obj: dict[str, Any] = {}
            try:
                obj["model"] = row["model"]
                obj["hardware"] = row["hardware"]
                obj["task"] = row["task"]
                for key in ("precision_bits", "batch_size", "total_tokens", "sample_count"):
                    obj[key] = int(row[key])
                for key in ("duration_s", "accuracy", "peak_vram_gb"):
                    obj[key] = float(row[key])
                kind = (row.get("power_kind") or "").strip()
                if kind == "tdp":
                    obj["power"] = {"kind": "tdp", "tdp_watts": float(row["tdp_watts"])}
                elif kind == "joules":
                    obj["power"] = {
                        "kind": "joules",
                        "joules_per_query": float(row["joules_per_query"]),
                    }
                else:
                    raise SchemaError(
                        f"power_kind must be 'tdp' or 'joules' in CSV (traces are "
                        f"JSONL-only), got {kind!r}"
                    )
                if row.get("grid_gco2_per_kwh"):
                    obj["grid_gco2_per_kwh"] = float(row["grid_gco2_per_kwh"])
                if row.get("source"):
                    obj["source"] = row["source"]
            except SchemaError as exc:
                raise SchemaError(str(exc), path=str(path), line=lineno) from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"malformed CSV row: {exc}", path=str(path), line=lineno) from exc
            try:
                records.append(record_from_dict(obj))
            except SchemaError as exc:
                raise SchemaError(str(exc), path=str(path), line=lineno) from exc
    return records


def load_corpus(paths: Iterable[str | Path]) -> list[TelemetryRecord]:
    """Load several telemetry files; directories expand to their *.jsonl.

    Files are processed in lexicographic path order so corpus assembly is
    deterministic regardless of argument order.
    """
    expanded: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            expanded.extend(sorted(p.glob("*.jsonl")))
            expanded.extend(sorted(p.glob("*.csv")))
        else:
            expanded.append(p)
    records: list[TelemetryRecord] = []
    for p in sorted(expanded):
        records.extend(load_telemetry(p))
    return records


def dump_telemetry(records: Iterable[TelemetryRecord], path: str | Path) -> None:
    """Write records as canonical JSONL (one record per line, file order)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), sort_keys=True))
            fh.write("\n")


# --- ladder assembly ---------------------------------------------------------


def build_ladders(
    records: Iterable[TelemetryRecord],
    reference_bits: int = DEFAULT_REFERENCE_BITS,
) -> tuple[list[PrecisionLadder], list[TelemetryRecord]]:
    """Group records into precision ladders keyed by (model, hardware, batch, task).

    Returns (ladders, unanchored): groups that lack the reference rung or a
    second rung are returned as unanchored records rather than ladders.
    Two records with the same full configuration are an error.  Ladders are
    sorted by key so downstream reports are deterministic.
    """
    groups: dict[LadderKey, dict[int, TelemetryRecord]] = {}
    for record in records:
        key = record.config.ladder_key()
        rungs = groups.setdefault(key, {})
        bits = record.config.precision_bits
        if bits in rungs:
            raise LadderError(f"two records share the configuration {record.config}")
        rungs[bits] = record

    ladders: list[PrecisionLadder] = []
    unanchored: list[TelemetryRecord] = []
    for key in sorted(groups, key=lambda k: k.as_tuple()):
        rungs = groups[key]
        if reference_bits in rungs and len(rungs) >= 2:
            ladders.append(
                PrecisionLadder(shared=key, rungs=dict(sorted(rungs.items())), reference_bits=reference_bits)
            )
        else:
            unanchored.extend(rungs[bits] for bits in sorted(rungs))
    return ladders, unanchored
