"""Batch-amortization energy model and its least-squares fit.

Per-query energy is modelled as

    E(p, B) = hops * (gamma_static + alpha_mem * p / B + phi(p))

with a static per-hop floor, a memory-movement term amortized over the
batch, and a per-hop casting penalty phi that vanishes at the native
precision.  Equating a quantized rung with the native rung gives the
critical batch size

    B* = alpha_mem * (native_bits - p) / phi(p)

at which the two cost exactly the same energy per query.

All precision derivatives are finite differences over the discrete rung
set; phi is a lookup table and is never interpolated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import nnls

from .pillars import MetricWarning, energy_per_query
from .telemetry import TelemetryRecord

__all__ = [
    "EnergyParams",
    "EnergyModelFit",
    "FitError",
    "energy_eval",
    "critical_batch",
    "energy_gradient_p",
    "fit_energy_model",
]


class FitError(ValueError):
    """The observation grid cannot identify the model parameters."""


@dataclass(frozen=True)
class EnergyParams:
    """Coefficients of the amortization model, all in Joules per hop.

    phi_by_precision maps quantized bit-widths to casting penalties; the
    native precision is implicitly zero and the table must be
    non-increasing as precision grows (casting never gets more expensive
    with more bits).
    """

    gamma_static: float
    alpha_mem: float
    phi_by_precision: Mapping[int, float]
    native_bits: int = 16
    hops: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.gamma_static) or self.gamma_static < 0:
            raise ValueError("gamma_static must be finite and >= 0")
        if not math.isfinite(self.alpha_mem) or self.alpha_mem < 0:
            raise ValueError("alpha_mem must be finite and >= 0")
        if not isinstance(self.native_bits, int) or self.native_bits < 1:
            raise ValueError("native_bits must be a positive integer")
        if not isinstance(self.hops, int) or self.hops < 0:
            raise ValueError("hops must be an integer >= 0")
        for bits, value in self.phi_by_precision.items():
            if not isinstance(bits, int) or bits < 1:
                raise ValueError("phi keys must be positive integer bit-widths")
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"phi({bits}) must be finite and >= 0")
        native_phi = self.phi_by_precision.get(self.native_bits)
        if native_phi not in (None, 0, 0.0):
            raise ValueError("phi(native_bits) must be 0: no casting at native precision")
        ladder = sorted(set(self.phi_by_precision) | {self.native_bits})
        for low, high in zip(ladder, ladder[1:]):
            if self.phi(low) < self.phi(high):
                raise ValueError(
                    f"phi must be non-increasing in precision: phi({low}) < phi({high})"
                )

    def phi(self, precision_bits: int) -> float:
        if precision_bits == self.native_bits:
            return 0.0
        try:
            return float(self.phi_by_precision[precision_bits])
        except KeyError:
            raise KeyError(
                f"no casting penalty recorded for {precision_bits}-bit "
                f"(known: {sorted(self.phi_by_precision)} + native {self.native_bits})"
            ) from None

    def precisions(self) -> list[int]:
        """Modelled rungs, ascending, native included."""
        return sorted(set(self.phi_by_precision) | {self.native_bits})


def energy_eval(params: EnergyParams, precision_bits: int, batch_size: float) -> float:
    """Per-query Joules predicted by the amortization model."""
    if batch_size <= 0:
        raise ValueError("batch_size must be > 0")
    phi = params.phi(precision_bits)
    return params.hops * (
        params.gamma_static + params.alpha_mem * precision_bits / batch_size + phi
    )


def critical_batch(params: EnergyParams, precision_bits: int) -> float:
    """Batch size where a quantized rung costs exactly the native energy.

    A rung with zero casting penalty is natively supported: there is no
    crossover to amortize toward, and the result is 0.0 with a warning
    rather than a division error.
    """
    if precision_bits >= params.native_bits:
        raise ValueError("critical batch is defined only for quantized rungs (p < native)")
    phi = params.phi(precision_bits)
    if phi == 0.0:
        warnings.warn(
            f"{precision_bits}-bit casting penalty is zero (native support); "
            "no critical batch",
            MetricWarning,
            stacklevel=2,
        )
        return 0.0
    return params.alpha_mem * (params.native_bits - precision_bits) / phi


def energy_gradient_p(params: EnergyParams, precision_bits: int, batch_size: float) -> float:
    """Finite-difference energy slope along the precision axis.

    The phi derivative is a forward difference to the next-higher modelled
    precision; the result is hops * (alpha_mem / B + dphi/dp).  The slope
    is exactly zero at the critical batch size of a two-rung ladder.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be > 0")
    ladder = params.precisions()
    if precision_bits not in ladder:
        raise KeyError(f"{precision_bits}-bit is not a modelled precision ({ladder})")
    index = ladder.index(precision_bits)
    if index + 1 >= len(ladder):
        raise ValueError(
            f"no higher precision adjacent to {precision_bits}-bit; gradient undefined"
        )
    upper = ladder[index + 1]
    dphi_dp = (params.phi(upper) - params.phi(precision_bits)) / (upper - precision_bits)
    return params.hops * (params.alpha_mem / batch_size + dphi_dp)


@dataclass(frozen=True)
class EnergyModelFit:
    """Fitted amortization model with fit diagnostics."""

    params: EnergyParams
    residual_rms: float  # Joules, on the per-query energy scale
    n_points: int
    condition_flag: str = "ok"  # ok | underdetermined
    hops_assumed: bool = False  # hops inferred from tokens-per-query

    def bstar_by_precision(self) -> dict[int, float]:
        """Critical batch per quantized rung (0.0 marks native support)."""
        out: dict[int, float] = {}
        for bits in self.params.precisions():
            if bits >= self.params.native_bits:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", MetricWarning)
                out[bits] = critical_batch(self.params, bits)
        return out


def fit_energy_model(
    records: Iterable[TelemetryRecord],
    native_bits: int = 16,
    hops: int | None = None,
    rectangle_rule: bool = False,
) -> EnergyModelFit:
    """Fit (gamma_static, alpha_mem, phi) to measured per-query energies.

    The model is linear in its parameters, so the fit is a non-negative
    least squares over the design matrix [1, p/B, rung indicators]; the
    native rung's phi is pinned to zero by construction rather than fitted.

    ``hops`` defaults to the mean tokens-per-query of the observations
    (flagged via hops_assumed) when not supplied.  Records must share one
    (model, hardware, task); the grid must contain at least as many
    distinct (precision, batch) points as free parameters, with enough
    batch diversity to separate alpha_mem from phi — otherwise the fit is
    refused.
    """
    records = list(records)
    if not records:
        raise FitError("no records to fit")

    identities = {(r.config.model_name, r.config.hardware, r.config.task) for r in records}
    if len(identities) != 1:
        raise FitError(f"records span multiple (model, hardware, task) identities: {sorted(identities)}")

    if hops is None:
        per_query = [r.total_tokens / r.sample_count for r in records]
        hops_value = max(1, round(float(np.mean(per_query))))
        hops_assumed = True
    else:
        if hops < 1:
            raise ValueError("hops must be >= 1")
        hops_value = hops
        hops_assumed = False

    quantized = sorted(
        {r.config.precision_bits for r in records if r.config.precision_bits != native_bits}
    )
    n_params = 2 + len(quantized)

    points = {(r.config.precision_bits, r.config.batch_size) for r in records}
    if len(points) < n_params:
        raise FitError(
            f"underdetermined grid: {len(points)} distinct (precision, batch) points "
            f"for {n_params} free parameters; widen the batch or precision sweep"
        )

    rows = []
    targets = []
    for r in records:
        p, b = r.config.precision_bits, r.config.batch_size
        row = [1.0, p / b] + [1.0 if p == q else 0.0 for q in quantized]
        rows.append(row)
        targets.append(energy_per_query(r, rectangle_rule) / hops_value)
    design = np.array(rows, dtype=float)
    y = np.array(targets, dtype=float)

    if np.linalg.matrix_rank(design) < n_params:
        raise FitError(
            "underdetermined grid: design is rank-deficient (a single batch size "
            "cannot separate alpha_mem from phi); add batch diversity"
        )

    solution, _ = nnls(design, y)
    residual_rms = float(np.sqrt(np.mean((design @ solution - y) ** 2))) * hops_value

    params = EnergyParams(
        gamma_static=float(solution[0]),
        alpha_mem=float(solution[1]),
        phi_by_precision={q: float(v) for q, v in zip(quantized, solution[2:])},
        native_bits=native_bits,
        hops=hops_value,
    )
    return EnergyModelFit(
        params=params,
        residual_rms=residual_rms,
        n_points=len(points),
        condition_flag="ok",
        hops_assumed=hops_assumed,
    )
