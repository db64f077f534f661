"""Telemetry collector for LLM inference runs.

Wraps a model-inference callable, samples a pluggable power source, counts
tokens and per-query correctness, and emits one schema-valid telemetry
record per run as JSONL — the wire format consumed by the sustaindex
analysis CLI.

Components:

    collector  CollectorConfig, collect (run wrapping, atomic emission)
    sources    power source plug-ins (tdp, mock trace, nvml) and registry
    cli        ``sustaincollect collect --config <file>``
"""

from __future__ import annotations

from .collector import CollectError, CollectorConfig, collect
from .sources import (
    MockTraceSource,
    NvmlSource,
    PowerSourceError,
    TdpSource,
    build_source,
    known_sources,
    register_power_source,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CollectError",
    "CollectorConfig",
    "collect",
    "MockTraceSource",
    "NvmlSource",
    "PowerSourceError",
    "TdpSource",
    "build_source",
    "known_sources",
    "register_power_source",
]
