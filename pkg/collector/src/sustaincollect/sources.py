"""Pluggable power sources for the collector.

Three modes, declared by the ``mode`` attribute:

    anchor  no sampling; the record carries a rated-TDP anchor
    replay  power is a known function of run time; the trace is
            synthesized after the run from ``watts_at``
    live    power must be polled during the run via ``read_watts``

Shipped sources: ``tdp`` (anchor), ``mock`` (replay from a trace file),
``nvml`` (live, GPU management library; falls back to the rated TDP with
an explicit warning when the library is unavailable).  Additional sources
can be registered with :func:`register_power_source`.
"""

from __future__ import annotations

import importlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

__all__ = [
    "PowerSourceError",
    "PowerSource",
    "TdpSource",
    "MockTraceSource",
    "NvmlSource",
    "register_power_source",
    "build_source",
]


class PowerSourceError(ValueError):
    """A power source cannot be constructed or read."""


class PowerSource(Protocol):
    name: str
    mode: str  # anchor | replay | live


@dataclass(frozen=True)
class TdpSource:
    """Rated board power: the run is billed at a constant wattage."""

    watts: float
    name: str = "tdp"
    mode: str = "anchor"

    def __post_init__(self) -> None:
        if not math.isfinite(self.watts) or self.watts <= 0:
            raise PowerSourceError("rated power must be finite and > 0")


@dataclass(frozen=True)
class MockTraceSource:
    """Replays a recorded trace file as the instantaneous power signal.

    The file holds a JSON list of [seconds, watts] pairs with strictly
    increasing offsets; between samples the power holds the last value
    (step interpolation), and times before the first sample read the
    first value.
    """

    samples: tuple[tuple[float, float], ...]
    name: str = "mock"
    mode: str = "replay"

    def __post_init__(self) -> None:
        if not self.samples:
            raise PowerSourceError("mock trace file holds no samples")
        last_t = -math.inf
        for t, w in self.samples:
            if not (math.isfinite(t) and math.isfinite(w)) or t < 0 or w < 0:
                raise PowerSourceError("mock trace samples must be finite and >= 0")
            if t <= last_t:
                raise PowerSourceError("mock trace offsets must be strictly increasing")
            last_t = t

    @classmethod
    def from_file(cls, path: str | Path) -> "MockTraceSource":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list):
            raise PowerSourceError(f"{path}: expected a JSON list of [seconds, watts] pairs")
        try:
            samples = tuple((float(t), float(w)) for t, w in raw)
        except (TypeError, ValueError) as exc:
            raise PowerSourceError(f"{path}: malformed trace sample: {exc}") from exc
        return cls(samples=samples)

    def watts_at(self, t: float) -> float:
        value = self.samples[0][1]
        for ts, w in self.samples:
            if ts > t:
                break
            value = w
        return value


# indirection so tests can force the import failure deterministically
_import_module: Callable[[str], object] = importlib.import_module


class NvmlSource:
    """Live GPU power via the NVIDIA management library (device 0)."""

    name = "nvml"
    mode = "live"

    def __init__(self, importer: Callable[[str], object] | None = None) -> None:
        importer = _import_module if importer is None else importer
        try:
            nvml = importer("pynvml")
        except Exception as exc:
            raise PowerSourceError(f"management library not importable: {exc}") from exc
        try:
            nvml.nvmlInit()
            self._nvml = nvml
            self._handle = nvml.nvmlDeviceGetHandleByIndex(0)
        except Exception as exc:
            raise PowerSourceError(f"management library offline: {exc}") from exc

    def read_watts(self) -> float:
        return float(self._nvml.nvmlDeviceGetPowerUsage(self._handle)) / 1000.0


def _build_tdp(config) -> tuple[PowerSource, str | None]:
    if config.tdp_watts is None:
        raise PowerSourceError("tdp power source requires tdp_watts")
    return TdpSource(config.tdp_watts), None


def _build_mock(config) -> tuple[PowerSource, str | None]:
    if config.trace_path is None:
        raise PowerSourceError("mock power source requires a trace file")
    return MockTraceSource.from_file(config.trace_path), None


def _build_nvml(config) -> tuple[PowerSource, str | None]:
    if config.tdp_watts is None:
        raise PowerSourceError("nvml power source requires tdp_watts as its fallback")
    try:
        return NvmlSource(), None
    except PowerSourceError as exc:
        warning = f"power sampling unavailable ({exc}); fell back to rated TDP"
        return TdpSource(config.tdp_watts), warning


_SOURCE_BUILDERS: dict[str, Callable] = {
    "tdp": _build_tdp,
    "mock": _build_mock,
    "nvml": _build_nvml,
}


def register_power_source(name: str, builder: Callable) -> None:
    """Register a source builder: config -> (source, warning-or-None)."""
    if not name:
        raise ValueError("power source name must be non-empty")
    _SOURCE_BUILDERS[name] = builder


def known_sources() -> tuple[str, ...]:
    return tuple(sorted(_SOURCE_BUILDERS))


def build_source(config) -> tuple[PowerSource, str | None]:
    try:
        builder = _SOURCE_BUILDERS[config.power_source]
    except KeyError:
        raise PowerSourceError(
            f"unknown power source {config.power_source!r}; known: {', '.join(known_sources())}"
        ) from None
    return builder(config)
