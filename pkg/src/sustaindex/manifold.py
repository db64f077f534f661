"""Sustainability index aggregation and quantization-trap detection.

A rung's pillar triple (trust, economy, energy) collapses to a scalar
sustainability index under a weight policy.  A ladder is *divergent* —
the quantization trap — when restoring precision toward the reference
rung raises the index for every quantized rung, i.e. every per-rung
slope (SI_ref - SI_rung) / (bits_ref - bits_rung) is positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .pillars import (
    EconWeights,
    MetricWarning,
    TrustSpec,
    economic_index,
    energy_index,
    trust_index,
)
from .telemetry import LadderKey, PrecisionLadder, TelemetryRecord

__all__ = [
    "PolicyWeights",
    "SustainabilityVector",
    "TrapVerdict",
    "TIE_EPS",
    "aggregate_si",
    "pillar_vector",
    "detect_trap",
    "pareto_dominates",
    "si_deficit",
]

# slope magnitudes below this are ties, never evidence of divergence
TIE_EPS = 1e-9


@dataclass(frozen=True)
class PolicyWeights:
    """Pillar weights plus the aggregation policy (linear or geometric)."""

    w_trust: float = 0.34
    w_econ: float = 0.33
    w_energy: float = 0.33
    policy: str = "linear"

    def __post_init__(self) -> None:
        for name in ("w_trust", "w_econ", "w_energy"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        total = self.w_trust + self.w_econ + self.w_energy
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pillar weights must sum to 1 (got {total!r})")
        if self.policy not in ("linear", "geometric"):
            raise ValueError("policy must be 'linear' or 'geometric'")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_trust, self.w_econ, self.w_energy)


@dataclass(frozen=True)
class SustainabilityVector:
    """Pillar triple for one rung, in canonical (trust, econ, energy) order."""

    trust: float
    econ: float
    energy: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.trust, self.econ, self.energy)


@dataclass(frozen=True)
class TrapVerdict:
    """Outcome of trap detection on one precision ladder."""

    ladder_key: LadderKey
    reference_bits: int
    si_by_precision: dict[int, float]
    gradient_sign: str  # divergent | conforming | mixed
    dominated_rungs: tuple[int, ...]
    failed_rungs: tuple[tuple[int, str], ...] = ()


def aggregate_si(vector: SustainabilityVector, weights: PolicyWeights) -> float:
    """Collapse a pillar triple to the scalar sustainability index.

    linear:    w . v
    geometric: prod(v_i ** w_i) — any zero pillar zeroes the index
    (bottleneck intolerance), reported with a warning.  Negative pillar
    values are invalid under either policy.
    """
    v = vector.as_tuple()
    w = weights.as_tuple()
    if any(not math.isfinite(x) or x < 0 for x in v):
        raise ValueError(f"pillar values must be finite and >= 0, got {v}")
    if weights.policy == "linear":
        return sum(wi * vi for wi, vi in zip(w, v))
    if any(vi == 0 for vi in v):
        warnings.warn(
            "geometric policy hit a zero pillar; index bottlenecked to 0",
            MetricWarning,
            stacklevel=2,
        )
        return 0.0
    return math.prod(vi**wi for wi, vi in zip(w, v))


def pillar_vector(
    record: TelemetryRecord,
    reference: TelemetryRecord,
    trust_spec: TrustSpec = TrustSpec(),
    econ_weights: EconWeights = EconWeights(),
    rectangle_rule: bool = False,
) -> SustainabilityVector:
    """All three pillar indices for one rung against its reference."""
    return SustainabilityVector(
        trust=trust_index(record, reference, trust_spec),
        econ=economic_index(record, reference, econ_weights),
        energy=energy_index(record, reference, rectangle_rule).s_si,
    )


def pareto_dominates(a: SustainabilityVector, b: SustainabilityVector) -> bool:
    """True when a >= b on every pillar and > b on at least one."""
    at, bt = a.as_tuple(), b.as_tuple()
    return all(x >= y for x, y in zip(at, bt)) and any(x > y for x, y in zip(at, bt))


def si_deficit(anchor_si: float, rung_si: float) -> float:
    """Relative index shortfall of a rung: (ref - rung) / ref."""
    if anchor_si <= 0:
        raise ValueError("reference index must be > 0 to express a deficit")
    return (anchor_si - rung_si) / anchor_si


def detect_trap(
    ladder: PrecisionLadder,
    weights: PolicyWeights = PolicyWeights(),
    *,
    trust_spec: TrustSpec = TrustSpec(),
    econ_weights: EconWeights = EconWeights(),
    rectangle_rule: bool = False,
) -> TrapVerdict:
    """Score every rung of a ladder and classify its precision gradient.

    Each quantized rung is compared against the reference rung through the
    slope (SI_ref - SI_rung) / (bits_ref - bits_rung):

    * divergent:  every slope is positive — restoring precision always
      raises the index (the quantization trap);
    * conforming: no positive slope beyond the tie threshold;
    * mixed:      slopes of both signs.

    Slopes within TIE_EPS of zero are ties and never count as divergence.
    A rung whose pillars cannot be computed is reported in failed_rungs and
    excluded from the gradient classification (partial verdict).
    """
    reference = ladder.anchor
    ref_bits = ladder.reference_bits

    si: dict[int, float] = {}
    dominated: list[int] = []
    failed: list[tuple[int, str]] = []
    ref_vector = pillar_vector(reference, reference, trust_spec, econ_weights, rectangle_rule)
    si[ref_bits] = aggregate_si(ref_vector, weights)

    for bits in ladder.precisions():
        if bits == ref_bits:
            continue
        record = ladder.rungs[bits]
        try:
            vector = pillar_vector(record, reference, trust_spec, econ_weights, rectangle_rule)
        except ValueError as exc:
            failed.append((bits, str(exc)))
            continue
        si[bits] = aggregate_si(vector, weights)
        if pareto_dominates(ref_vector, vector):
            dominated.append(bits)

    slopes = [
        (si[ref_bits] - si[bits]) / (ref_bits - bits)
        for bits in si
        if bits != ref_bits
    ]
    positive = [s for s in slopes if s > TIE_EPS]
    negative = [s for s in slopes if s < -TIE_EPS]
    if positive and not negative and len(positive) == len(slopes):
        sign = "divergent"
    elif positive and negative:
        sign = "mixed"
    else:
        sign = "conforming"

    return TrapVerdict(
        ladder_key=ladder.shared,
        reference_bits=ref_bits,
        si_by_precision=si,
        gradient_sign=sign,
        dominated_rungs=tuple(sorted(dominated)),
        failed_rungs=tuple(failed),
    )
