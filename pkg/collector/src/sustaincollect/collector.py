"""Run wrapping and telemetry emission.

``collect`` times an inference callable over its prompt set, aggregates
token counts and per-query correctness, attaches power evidence from the
configured source, and writes exactly one telemetry record as JSONL.

The output is written atomically: the record goes to ``<out>.part`` and is
renamed into place only after a clean run, so a callable that fails
mid-run leaves no partial file behind.  One collection may run per process
at a time (live power sampling owns the sampling cadence).
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

from .sources import PowerSource, PowerSourceError, build_source

__all__ = ["CollectorConfig", "CollectError", "collect"]


class CollectError(RuntimeError):
    """A run could not be collected into a valid record."""


_ACTIVE = threading.Lock()


@dataclass(frozen=True)
class CollectorConfig:
    """Identity, power sourcing, and output destination for one run."""

    model: str
    hardware: str
    precision_bits: int
    batch_size: int
    task: str
    power_source: str
    out_path: str
    peak_vram_gb: float
    interval_s: float = 1.0
    tdp_watts: float | None = None
    trace_path: str | None = None
    grid_gco2_per_kwh: float | None = None
    source_note: str | None = None

    def __post_init__(self) -> None:
        for name in ("model", "hardware", "task", "power_source", "out_path"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.precision_bits <= 0:
            raise ValueError("precision_bits must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not math.isfinite(self.peak_vram_gb) or self.peak_vram_gb <= 0:
            raise ValueError("peak_vram_gb must be finite and > 0")
        if not math.isfinite(self.interval_s) or self.interval_s <= 0:
            raise ValueError("interval_s must be finite and > 0")
        if self.power_source == "mock" and self.trace_path is None:
            raise ValueError("mock power source requires a trace file")
        if self.grid_gco2_per_kwh is not None and (
            not math.isfinite(self.grid_gco2_per_kwh) or self.grid_gco2_per_kwh < 0
        ):
            raise ValueError("grid_gco2_per_kwh must be finite and >= 0")

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "CollectorConfig":
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str | Path) -> "CollectorConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if not isinstance(obj, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)


class _LiveSampler:
    """Polls a live source on a fixed cadence, concurrent with the run."""

    def __init__(self, source: PowerSource, interval_s: float, clock: Callable[[], float]):
        self._source = source
        self._interval = interval_s
        self._clock = clock
        self._samples: list[tuple[float, float]] = []
        self._stop = threading.Event()
        self._t0 = 0.0
        self._thread = threading.Thread(target=self._loop, daemon=True)

    def start(self, t0: float) -> None:
        self._t0 = t0
        self._thread.start()

    def _loop(self) -> None:
        while True:
            self._samples.append((self._clock() - self._t0, self._source.read_watts()))
            if self._stop.wait(self._interval):
                return

    def abort(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join()

    def finish(self, duration_s: float) -> tuple[tuple[float, float], ...]:
        self.abort()
        # clamp to the run window and enforce strictly increasing offsets
        kept: list[tuple[float, float]] = []
        last = -math.inf
        for t, w in self._samples:
            if last < t < duration_s:
                kept.append((t, w))
                last = t
        kept.append((duration_s, self._source.read_watts()))
        return tuple(kept)


def _replay_samples(
    source: PowerSource, duration_s: float, interval_s: float
) -> tuple[tuple[float, float], ...]:
    times: list[float] = []
    k = 0
    while True:
        t = k * interval_s
        if t >= duration_s:
            break
        times.append(t)
        k += 1
    times.append(duration_s)
    return tuple((t, source.watts_at(t)) for t in times)


def _as_correct(value: Any) -> float:
    if isinstance(value, bool):
        return 1.0 if value else 0.0
    score = float(value)
    if not math.isfinite(score) or not 0.0 <= score <= 1.0:
        raise CollectError(f"per-query correctness must lie in [0, 1], got {value!r}")
    return score


def collect(
    run: Callable[[], Iterable[tuple[int, Any]]],
    config: CollectorConfig,
    *,
    power_source: PowerSource | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> Path:
    """Execute ``run`` and write one telemetry record; returns the path.

    ``run`` is called once and must yield a ``(generated_tokens,
    correctness)`` pair per prompt; correctness is a bool or a score in
    [0, 1].  An explicit ``power_source`` instance overrides the one named
    in the config.
    """
    if not _ACTIVE.acquire(blocking=False):
        raise RuntimeError("single collector per process: another collection is active")
    sampler = None
    try:
        if power_source is not None:
            source, warning = power_source, None
        else:
            source, warning = build_source(config)

        if source.mode == "live":
            sampler = _LiveSampler(source, config.interval_s, clock)

        t0 = clock()
        if sampler is not None:
            sampler.start(t0)
        total_tokens = 0
        correct_sum = 0.0
        n = 0
        try:
            for tokens, correct in run():
                tokens = int(tokens)
                if tokens < 0:
                    raise CollectError(f"generated token count must be >= 0, got {tokens}")
                total_tokens += tokens
                correct_sum += _as_correct(correct)
                n += 1
        finally:
            duration_s = clock() - t0

        if n == 0:
            raise CollectError("runner yielded no prompts; nothing to record")
        if duration_s <= 0:
            raise CollectError("clock reported a non-positive run duration")

        if source.mode == "anchor":
            power: dict[str, Any] = {"kind": "tdp", "tdp_watts": source.watts}
        elif source.mode == "replay":
            samples = _replay_samples(source, duration_s, config.interval_s)
            power = {"kind": "trace", "samples": [[t, w] for t, w in samples]}
        elif source.mode == "live":
            samples = sampler.finish(duration_s)
            power = {"kind": "trace", "samples": [[t, w] for t, w in samples]}
        else:
            raise PowerSourceError(f"power source {source.name!r} has unknown mode {source.mode!r}")

        record: dict[str, Any] = {
            "model": config.model,
            "hardware": config.hardware,
            "precision_bits": config.precision_bits,
            "batch_size": config.batch_size,
            "task": config.task,
            "total_tokens": total_tokens,
            "duration_s": duration_s,
            "sample_count": n,
            "accuracy": correct_sum / n,
            "peak_vram_gb": config.peak_vram_gb,
            "power": power,
        }
        if config.grid_gco2_per_kwh is not None:
            record["grid_gco2_per_kwh"] = config.grid_gco2_per_kwh
        notes = [note for note in (config.source_note, warning) if note]
        if notes:
            record["source"] = "; ".join(notes)

        out = Path(config.out_path)
        part = out.with_name(out.name + ".part")
        try:
            with open(part, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")
            os.replace(part, out)
        except BaseException:
            part.unlink(missing_ok=True)
            raise
        return out
    finally:
        if sampler is not None:
            sampler.abort()
        _ACTIVE.release()
