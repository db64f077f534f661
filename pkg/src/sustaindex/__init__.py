"""Sustainability analytics for LLM inference telemetry.

The toolkit scores quantized inference configurations against a
full-precision reference along three pillars — trust (task quality),
economy (throughput and memory), and energy — detects the quantization
trap (rungs whose sustainability index falls below the reference), models
casting overhead and its batch amortization, and ships a deterministic
workload simulator for end-to-end validation.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .casting import (
    CorEstimate,
    HopLatency,
    LadderMismatchError,
    classify_dominance,
    cor_at_batch,
    estimate_cor,
    latency_per_hop,
)
from .energy_model import (
    EnergyModelFit,
    EnergyParams,
    FitError,
    critical_batch,
    energy_eval,
    energy_gradient_p,
    fit_energy_model,
)
from .manifold import (
    TIE_EPS,
    PolicyWeights,
    SustainabilityVector,
    TrapVerdict,
    aggregate_si,
    detect_trap,
    pareto_dominates,
    pillar_vector,
    si_deficit,
)
from .report import (
    CSV_SERIES,
    REPORT_SCHEMA_VERSION,
    cor_report,
    fit_report,
    render_markdown,
    score_report,
    write_csv_series,
)
from .pillars import (
    AnchorError,
    BottleneckError,
    EconWeights,
    EnergyResult,
    MetricWarning,
    TrustSpec,
    economic_index,
    energy_index,
    energy_per_query,
    register_trust_aggregator,
    trust_index,
)
from .simulator import (
    HopCost,
    SimOutput,
    SimScenario,
    TheoremCheck,
    TheoremReport,
    load_scenario,
    simulate,
    verify_theorems,
)
from .telemetry import (
    ConfigId,
    DirectJoules,
    LadderError,
    LadderKey,
    PowerEvidence,
    PrecisionLadder,
    SampledTrace,
    SchemaError,
    TdpAnchor,
    TelemetryRecord,
    TelemetryWarning,
    build_ladders,
    derived_tps,
    dump_telemetry,
    load_corpus,
    load_telemetry,
    record_from_dict,
    record_to_dict,
)

__all__ = [
    "__version__",
    # telemetry
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
    # pillars
    "TrustSpec",
    "EconWeights",
    "EnergyResult",
    "AnchorError",
    "BottleneckError",
    "MetricWarning",
    "register_trust_aggregator",
    "trust_index",
    "economic_index",
    "energy_per_query",
    "energy_index",
    # manifold
    "TIE_EPS",
    "PolicyWeights",
    "SustainabilityVector",
    "TrapVerdict",
    "aggregate_si",
    "pillar_vector",
    "detect_trap",
    "pareto_dominates",
    "si_deficit",
    # casting
    "HopLatency",
    "CorEstimate",
    "LadderMismatchError",
    "latency_per_hop",
    "estimate_cor",
    "cor_at_batch",
    "classify_dominance",
    # energy model
    "EnergyParams",
    "EnergyModelFit",
    "FitError",
    "energy_eval",
    "critical_batch",
    "energy_gradient_p",
    "fit_energy_model",
    # simulator
    "HopCost",
    "SimScenario",
    "SimOutput",
    "TheoremCheck",
    "TheoremReport",
    "load_scenario",
    "simulate",
    "verify_theorems",
    # report
    "REPORT_SCHEMA_VERSION",
    "CSV_SERIES",
    "score_report",
    "cor_report",
    "fit_report",
    "render_markdown",
    "write_csv_series",
]


def fixture_dir() -> str:
    """Absolute path of the bundled telemetry fixture corpus."""
    from pathlib import Path

    return str(Path(__file__).parent / "fixtures")
