"""Casting-overhead analysis from paired throughput measurements.

Quantized weights must be de-quantized (cast) on hardware without native
low-bit compute paths.  With per-token latencies tau = 1/TPS measured at
the same batch size, the casting overhead ratio

    COR = tau_cast / tau_comp = TPS_ref / TPS_quantized - 1

expresses the cast time as a multiple of the native compute time.  Under
the generative latency model (compute proportional to batch, casting a
fixed per-hop cost) the ratio amortizes as COR(B) = a_cast / (a_comp * B).
"""

from __future__ import annotations

from dataclasses import dataclass

from .telemetry import TelemetryRecord, derived_tps

__all__ = [
    "HopLatency",
    "CorEstimate",
    "LadderMismatchError",
    "latency_per_hop",
    "estimate_cor",
    "cor_at_batch",
    "classify_dominance",
]


class LadderMismatchError(ValueError):
    """The two records do not share (model, hardware, batch, task)."""


@dataclass(frozen=True)
class HopLatency:
    """Per-token latency split into native compute and casting residual.

    tau_cast is negative when the quantized model outruns its reference
    (native low-bit execution); it is reported as measured, never clamped.
    """

    tau_comp_s: float
    tau_cast_s: float

    @property
    def tau_total_s(self) -> float:
        return self.tau_comp_s + self.tau_cast_s


@dataclass(frozen=True)
class CorEstimate:
    """Casting overhead ratio for one quantized record vs its reference."""

    cor: float
    dominance: str  # casting_dominant | subordinate | accelerated
    latency: HopLatency


def latency_per_hop(record: TelemetryRecord) -> float:
    """Mean seconds per generated token: 1 / TPS."""
    tps = derived_tps(record)
    if tps <= 0:
        raise ValueError("cannot derive per-token latency from zero throughput")
    return 1.0 / tps


def classify_dominance(cor: float) -> str:
    """Partition of the COR line into its three regimes."""
    if cor > 1.0:
        return "casting_dominant"
    if cor < 0.0:
        return "accelerated"
    return "subordinate"


def estimate_cor(record: TelemetryRecord, reference: TelemetryRecord) -> CorEstimate:
    """COR from measured throughput at a shared (model, hardware, batch, task).

    The reference's per-token latency is taken as the native compute time;
    whatever the quantized record spends beyond it is attributed to casting:

        tau_comp = 1 / TPS_ref
        tau_cast = 1 / TPS_record - tau_comp
        COR      = tau_cast / tau_comp = TPS_ref / TPS_record - 1
    """
    if record.config.ladder_key() != reference.config.ladder_key():
        raise LadderMismatchError(
            f"records do not share a ladder key: {record.config.ladder_key()} "
            f"vs {reference.config.ladder_key()}"
        )
    ref_tps = derived_tps(reference)
    tps = derived_tps(record)
    if ref_tps <= 0 or tps <= 0:
        raise ValueError("COR estimation needs positive throughput on both records")

    tau_comp = 1.0 / ref_tps
    tau_cast = 1.0 / tps - tau_comp
    cor = ref_tps / tps - 1.0
    return CorEstimate(
        cor=cor,
        dominance=classify_dominance(cor),
        latency=HopLatency(tau_comp_s=tau_comp, tau_cast_s=tau_cast),
    )


def cor_at_batch(a_cast_s: float, a_comp_s: float, batch_size: int) -> float:
    """Projected COR at a batch size: a_cast / (a_comp * B).

    The per-hop casting cost is paid once per batch, so the ratio halves
    exactly each time the batch doubles.
    """
    if a_comp_s <= 0:
        raise ValueError("a_comp_s must be > 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return a_cast_s / (a_comp_s * batch_size)
