from __future__ import annotations

from pathlib import Path

import pytest

from sustaindex import ConfigId, DirectJoules, TelemetryRecord, fixture_dir
from sustaindex.telemetry import PowerEvidence


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return Path(fixture_dir())


def make_record(
    *,
    model: str = "m7b",
    hardware: str = "gpu0",
    bits: int = 16,
    batch: int = 1,
    task: str = "gsm8k",
    tokens: int = 10_000,
    duration_s: float = 100.0,
    n: int = 100,
    accuracy: float = 0.5,
    vram: float = 10.0,
    power: PowerEvidence | None = None,
    grid: float | None = None,
    source: str | None = None,
) -> TelemetryRecord:
    """Keyword-only record factory with innocuous defaults."""
    return TelemetryRecord(
        config=ConfigId(
            model_name=model,
            hardware=hardware,
            precision_bits=bits,
            batch_size=batch,
            task=task,
        ),
        total_tokens=tokens,
        duration_s=duration_s,
        sample_count=n,
        accuracy=accuracy,
        peak_vram_gb=vram,
        power=power if power is not None else DirectJoules(joules_per_query=100.0),
        grid_kgco2_per_kwh=grid,
        source=source,
    )
