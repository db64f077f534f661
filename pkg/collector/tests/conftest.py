from __future__ import annotations

import json

import pytest


class FakeClock:
    """Deterministic run clock; the runner advances it explicitly."""

    def __init__(self) -> None:
        self.now = 0.0

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def constant_trace_file(tmp_path):
    """Mock source input: 100 W from t=0 onward."""
    path = tmp_path / "trace.json"
    path.write_text(json.dumps([[0.0, 100.0]]))
    return path


def base_config(tmp_path, **overrides):
    from sustaincollect import CollectorConfig

    kwargs = dict(
        model="mistral-7b",
        hardware="a100",
        precision_bits=8,
        batch_size=1,
        task="gsm8k",
        power_source="tdp",
        tdp_watts=100.0,
        peak_vram_gb=9.3,
        interval_s=2.5,
        out_path=str(tmp_path / "run.jsonl"),
    )
    kwargs.update(overrides)
    return CollectorConfig(**kwargs)


def read_record(path) -> dict:
    lines = path.read_text().splitlines()
    assert len(lines) == 1, "collector emits exactly one record per run"
    return json.loads(lines[0])


def trapezoid_joules(samples: list[list[float]], duration_s: float | None = None) -> float:
    # edge-hold to the run window, mirroring the downstream integrator
    pts = [tuple(s) for s in samples]
    if duration_s is not None:
        if pts[0][0] > 0.0:
            pts.insert(0, (0.0, pts[0][1]))
        if pts[-1][0] < duration_s:
            pts.append((duration_s, pts[-1][1]))
    total = 0.0
    for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
        total += 0.5 * (w0 + w1) * (t1 - t0)
    return total
