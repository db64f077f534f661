"""Per-rung pillar indices: trust, economy, and energy.

All three pillars are anchored ratios against a reference (full-precision)
record measured on the same hardware/task/batch.  The reference compared
against itself scores exactly 1.0 on every pillar.

* trust: ratio of a task-quality aggregate (accuracy by default) between
  rung and reference, clamped to [0, 1].
* economy: weighted harmonic combination of relative throughput and
  relative memory headroom; deliberately not clamped.
* energy: per-query energy from the record's power evidence, compared
  either as a plain ratio (same grid) or through a log carbon-weighted
  score when both records carry grid carbon intensity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .telemetry import (
    DirectJoules,
    SampledTrace,
    TdpAnchor,
    TelemetryRecord,
    derived_tps,
)

__all__ = [
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
]


class AnchorError(ValueError):
    """The reference record cannot anchor a ratio (zero/invalid aggregate)."""


class BottleneckError(ValueError):
    """A pillar input collapsed to zero; names the offending dimension."""


class MetricWarning(UserWarning):
    """Non-fatal metric condition: clamping, degenerate ratio, coverage gap."""


# --- trust -------------------------------------------------------------------

_TrustAggregator = Callable[[TelemetryRecord], float]

_TRUST_AGGREGATORS: dict[str, _TrustAggregator] = {
    "accuracy": lambda record: record.accuracy,
}


def register_trust_aggregator(name: str, fn: _TrustAggregator) -> None:
    """Register a custom task-quality aggregate under ``name``.

    The callable maps a record to a non-negative quality score; the trust
    pillar is the rung/reference ratio of that score.
    """
    if not name or not isinstance(name, str):
        raise ValueError("aggregator name must be a non-empty string")
    _TRUST_AGGREGATORS[name] = fn


@dataclass(frozen=True)
class TrustSpec:
    """How to aggregate task quality for the trust pillar."""

    aggregation: str = "accuracy"
    task_topology: str = ""

    def aggregator(self) -> _TrustAggregator:
        try:
            return _TRUST_AGGREGATORS[self.aggregation]
        except KeyError:
            raise ValueError(
                f"unknown trust aggregation {self.aggregation!r}; "
                f"registered: {sorted(_TRUST_AGGREGATORS)}"
            ) from None


def trust_index(
    record: TelemetryRecord,
    reference: TelemetryRecord,
    spec: TrustSpec = TrustSpec(),
) -> float:
    """Trust pillar: quality(record) / quality(reference), clamped to [0, 1].

    A rung that outscores its reference is clamped to 1.0 with a warning;
    a zero reference aggregate cannot anchor the ratio and raises.
    """
    aggregate = spec.aggregator()
    ref_quality = aggregate(reference)
    if ref_quality == 0:
        raise AnchorError("reference quality aggregate is zero; trust ratio undefined")
    ratio = aggregate(record) / ref_quality
    if ratio > 1.0:
        warnings.warn(
            f"trust ratio {ratio:.4f} exceeds 1; clamped (rung outscored its reference)",
            MetricWarning,
            stacklevel=2,
        )
        return 1.0
    return max(0.0, ratio)


# --- economy ------------------------------------------------------------------


@dataclass(frozen=True)
class EconWeights:
    """Throughput-vs-memory emphasis for the economy pillar."""

    alpha_efficiency: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha_efficiency <= 1.0:
            raise ValueError("alpha_efficiency must lie in [0, 1]")


def economic_index(
    record: TelemetryRecord,
    reference: TelemetryRecord,
    weights: EconWeights = EconWeights(),
) -> float:
    """Economy pillar: weighted harmonic mean of relative speed and headroom.

    speed    = tps(record) / tps(reference)
    headroom = vram(reference) / vram(record)
    value    = 1 / (alpha/speed + (1-alpha)/headroom)

    The result is intentionally unclamped: a quantized rung that is both
    faster and smaller legitimately scores above 1.
    """
    ref_tps = derived_tps(reference)
    tps = derived_tps(record)
    if ref_tps <= 0:
        raise BottleneckError("reference throughput is zero; economy undefined")
    if tps <= 0:
        raise BottleneckError("record throughput is zero; economy collapses")
    speed = tps / ref_tps
    headroom = reference.peak_vram_gb / record.peak_vram_gb

    alpha = weights.alpha_efficiency
    # degenerate emphases fall back to the surviving term
    if alpha == 0.0:
        return headroom
    if alpha == 1.0:
        return speed
    return 1.0 / (alpha / speed + (1.0 - alpha) / headroom)


# --- energy -------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyResult:
    """Energy pillar outcome for one record vs its reference."""

    joules_per_query: float
    caes: float | None
    s_si: float
    mode: str  # same_grid_linear | cross_grid_log
    degenerate: bool = False


def _integrate_trace(
    trace: SampledTrace, duration_s: float, rectangle_rule: bool
) -> float:
    """Integrate sampled power over [0, duration].

    The boundary samples are held constant outside the sampled span so a
    trace covering the full run integrates exactly; a trace covering less
    than 95% of the run emits a coverage warning.
    """
    t = np.array([s[0] for s in trace.samples], dtype=float)
    w = np.array([s[1] for s in trace.samples], dtype=float)
    if np.any(w < 0):
        raise ValueError("power trace wattage must be >= 0")

    span = min(t[-1], duration_s) - t[0]
    if span < 0.95 * duration_s:
        warnings.warn(
            f"power trace covers {span:.3g}s of a {duration_s:.3g}s run; "
            "boundary samples extrapolated",
            MetricWarning,
            stacklevel=3,
        )

    # clip to the run window, then pad both ends with held samples
    keep = t <= duration_s
    t, w = t[keep], w[keep]
    if t.size == 0:
        raise ValueError("power trace lies entirely outside the run window")
    if t[0] > 0.0:
        t = np.insert(t, 0, 0.0)
        w = np.insert(w, 0, w[0])
    if t[-1] < duration_s:
        t = np.append(t, duration_s)
        w = np.append(w, w[-1])

    if rectangle_rule:
        # left-rectangle sum, the coarser convention kept behind a flag
        return float(np.sum(w[:-1] * np.diff(t)))
    return float(np.trapezoid(w, t))


def energy_per_query(record: TelemetryRecord, rectangle_rule: bool = False) -> float:
    """Joules per query from whichever power evidence the record carries.

    trace  -> integral of sampled power over the run, / sample_count
    tdp    -> tdp_watts * duration / sample_count
    joules -> passthrough

    ``rectangle_rule`` switches trace integration from trapezoids to a
    left-rectangle sum for compatibility with coarser pipelines.
    """
    power = record.power
    if isinstance(power, DirectJoules):
        return power.joules_per_query
    if isinstance(power, TdpAnchor):
        return power.tdp_watts * record.duration_s / record.sample_count
    return _integrate_trace(power, record.duration_s, rectangle_rule) / record.sample_count


def energy_index(
    record: TelemetryRecord,
    reference: TelemetryRecord,
    rectangle_rule: bool = False,
) -> EnergyResult:
    """Energy pillar for one record against its reference.

    Same grid (either record lacks carbon intensity):
        s = min(1, E_ref / E_record)
    Cross grid (both carry intensity), via the carbon-weighted score
    x = E * grid_kgco2_per_kwh:
        s = min(1, log(1 + x_ref) / log(1 + x_record))

    A record with zero energy (or zero carbon score in log mode) cannot be
    a denominator; it scores 1.0 and is flagged degenerate.
    """
    e_record = energy_per_query(record, rectangle_rule)
    e_ref = energy_per_query(reference, rectangle_rule)

    cross_grid = (
        record.grid_kgco2_per_kwh is not None and reference.grid_kgco2_per_kwh is not None
    )
    if cross_grid:
        mode = "cross_grid_log"
        caes: float | None = e_record * record.grid_kgco2_per_kwh  # type: ignore[operator]
        caes_ref = e_ref * reference.grid_kgco2_per_kwh  # type: ignore[operator]
        numerator = math.log1p(caes_ref)
        denominator = math.log1p(caes)
    else:
        mode = "same_grid_linear"
        caes = None if record.grid_kgco2_per_kwh is None else e_record * record.grid_kgco2_per_kwh
        numerator = e_ref
        denominator = e_record

    if denominator == 0:
        warnings.warn(
            "record energy evidence is zero; energy index degenerate at 1.0",
            MetricWarning,
            stacklevel=2,
        )
        return EnergyResult(e_record, caes, 1.0, mode, degenerate=True)
    return EnergyResult(e_record, caes, min(1.0, numerator / denominator), mode)
