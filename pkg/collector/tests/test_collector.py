from __future__ import annotations

import json
import subprocess
import sys
import time

import pytest

from sustaincollect import (
    CollectError,
    CollectorConfig,
    MockTraceSource,
    PowerSourceError,
    TdpSource,
    collect,
)

from conftest import base_config, read_record, trapezoid_joules


def two_prompt_run(clock, seconds_each=5.0):
    def run():
        clock.advance(seconds_each)
        yield 120, True
        clock.advance(seconds_each)
        yield 80, False

    return run


# --- the constant-power worked example ------------------------------------------


def test_mock_constant_power_run_costs_500_joules_per_query(tmp_path, clock, constant_trace_file):
    config = base_config(
        tmp_path, power_source="mock", trace_path=str(constant_trace_file), tdp_watts=None
    )
    out = collect(two_prompt_run(clock), config, clock=clock)
    record = read_record(out)
    assert record["duration_s"] == 10.0
    assert record["sample_count"] == 2
    assert record["power"]["kind"] == "trace"
    samples = record["power"]["samples"]
    assert [t for t, _ in samples] == [0.0, 2.5, 5.0, 7.5, 10.0]
    assert {w for _, w in samples} == {100.0}
    # 100 W held for 10 s over 2 queries -> 500 J per query, exactly
    assert trapezoid_joules(samples) / record["sample_count"] == 500.0


def test_tdp_anchor_agrees_with_the_constant_trace(tmp_path, clock, constant_trace_file):
    mock_cfg = base_config(
        tmp_path,
        power_source="mock",
        trace_path=str(constant_trace_file),
        tdp_watts=None,
        out_path=str(tmp_path / "mock.jsonl"),
    )
    mock_record = read_record(collect(two_prompt_run(clock), mock_cfg, clock=clock))

    clock.now = 0.0
    tdp_cfg = base_config(tmp_path, out_path=str(tmp_path / "tdp.jsonl"))
    tdp_record = read_record(collect(two_prompt_run(clock), tdp_cfg, clock=clock))

    assert tdp_record["power"] == {"kind": "tdp", "tdp_watts": 100.0}
    trace_jpq = trapezoid_joules(mock_record["power"]["samples"]) / mock_record["sample_count"]
    tdp_jpq = (
        tdp_record["power"]["tdp_watts"] * tdp_record["duration_s"] / tdp_record["sample_count"]
    )
    assert abs(trace_jpq - tdp_jpq) <= 1e-9


def test_emitted_record_passes_the_downstream_validator(tmp_path, clock, constant_trace_file):
    config = base_config(
        tmp_path, power_source="mock", trace_path=str(constant_trace_file), tdp_watts=None
    )
    out = collect(two_prompt_run(clock), config, clock=clock)
    result = subprocess.run(
        [sys.executable, "-m", "sustaindex.cli", "validate", str(out)],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stdout + result.stderr


# --- aggregation ---------------------------------------------------------------


def test_tokens_sum_and_correctness_flags_average(tmp_path, clock):
    def run():
        for tokens, correct in ((100, True), (50, False), (70, True), (30, 1.0)):
            clock.advance(1.0)
            yield tokens, correct

    record = read_record(collect(run, base_config(tmp_path), clock=clock))
    assert record["total_tokens"] == 250
    assert record["sample_count"] == 4
    assert record["accuracy"] == 0.75
    assert record["model"] == "mistral-7b"
    assert record["precision_bits"] == 8


def test_fractional_correctness_scores_are_accepted(tmp_path, clock):
    def run():
        clock.advance(2.0)
        yield 10, 0.5
        clock.advance(2.0)
        yield 10, 0.25

    record = read_record(collect(run, base_config(tmp_path), clock=clock))
    assert record["accuracy"] == 0.375


def test_correctness_outside_the_unit_interval_is_refused(tmp_path, clock):
    def run():
        clock.advance(1.0)
        yield 10, 1.5

    with pytest.raises(CollectError, match=r"\[0, 1\]"):
        collect(run, base_config(tmp_path), clock=clock)


def test_grid_intensity_and_note_pass_through(tmp_path, clock):
    config = base_config(tmp_path, grid_gco2_per_kwh=450.0, source_note="lab bench 3")
    record = read_record(collect(two_prompt_run(clock), config, clock=clock))
    assert record["grid_gco2_per_kwh"] == 450.0
    assert record["source"] == "lab bench 3"


# --- atomicity and refusals ------------------------------------------------------


def test_failing_runner_leaves_no_output_behind(tmp_path, clock):
    def run():
        clock.advance(5.0)
        yield 120, True
        raise RuntimeError("inference backend crashed")

    config = base_config(tmp_path)
    with pytest.raises(RuntimeError, match="backend crashed"):
        collect(run, config, clock=clock)
    assert list(tmp_path.iterdir()) == []  # neither the record nor a .part file


def test_empty_prompt_set_is_refused(tmp_path, clock):
    def run():
        return iter(())

    with pytest.raises(CollectError, match="no prompts"):
        collect(run, base_config(tmp_path), clock=clock)
    assert list(tmp_path.iterdir()) == []


def test_negative_token_count_is_refused(tmp_path, clock):
    def run():
        clock.advance(1.0)
        yield -5, True

    with pytest.raises(CollectError, match=">= 0"):
        collect(run, base_config(tmp_path), clock=clock)


def test_only_one_collection_may_run_per_process(tmp_path, clock):
    inner_config = base_config(tmp_path, out_path=str(tmp_path / "inner.jsonl"))

    def nested_run():
        clock.advance(1.0)
        collect(two_prompt_run(clock), inner_config, clock=clock)
        yield 10, True

    with pytest.raises(RuntimeError, match="single collector"):
        collect(nested_run, base_config(tmp_path), clock=clock)


# --- configuration validation -----------------------------------------------------


def test_config_rejects_nonpositive_interval(tmp_path):
    with pytest.raises(ValueError, match="interval_s"):
        base_config(tmp_path, interval_s=0.0)


def test_mock_source_requires_a_trace_file(tmp_path):
    with pytest.raises(ValueError, match="trace file"):
        base_config(tmp_path, power_source="mock", trace_path=None)


def test_tdp_source_requires_rated_watts(tmp_path, clock):
    config = base_config(tmp_path, tdp_watts=None)
    with pytest.raises(PowerSourceError, match="tdp_watts"):
        collect(two_prompt_run(clock), config, clock=clock)


def test_unknown_power_source_is_refused(tmp_path, clock):
    config = base_config(tmp_path, power_source="crystal-ball")
    with pytest.raises(PowerSourceError, match="known: mock, nvml, tdp"):
        collect(two_prompt_run(clock), config, clock=clock)


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        CollectorConfig.from_dict({"model": "m", "prompt_file": "x.txt"})


# --- power source behavior ---------------------------------------------------------


def test_mock_trace_holds_the_last_sample_value(tmp_path, clock):
    trace = tmp_path / "steps.json"
    trace.write_text(json.dumps([[0.0, 50.0], [5.0, 150.0]]))
    config = base_config(tmp_path, power_source="mock", trace_path=str(trace), tdp_watts=None)
    record = read_record(collect(two_prompt_run(clock), config, clock=clock))
    assert record["power"]["samples"] == [
        [0.0, 50.0],
        [2.5, 50.0],
        [5.0, 150.0],
        [7.5, 150.0],
        [10.0, 150.0],
    ]


def test_replayed_trace_ends_exactly_at_the_run_duration(tmp_path, clock, constant_trace_file):
    config = base_config(
        tmp_path,
        power_source="mock",
        trace_path=str(constant_trace_file),
        tdp_watts=None,
        interval_s=3.0,
    )
    record = read_record(collect(two_prompt_run(clock, seconds_each=5.0), config, clock=clock))
    assert [t for t, _ in record["power"]["samples"]] == [0.0, 3.0, 6.0, 9.0, 10.0]


def test_unavailable_gpu_sampler_falls_back_to_tdp_with_warning(tmp_path, clock, monkeypatch):
    import sustaincollect.sources as sources

    def refuse(name):
        raise ImportError(f"{name} is not installed")

    monkeypatch.setattr(sources, "_import_module", refuse)
    config = base_config(tmp_path, power_source="nvml", source_note="rig 7")
    record = read_record(collect(two_prompt_run(clock), config, clock=clock))
    assert record["power"] == {"kind": "tdp", "tdp_watts": 100.0}
    assert record["source"].startswith("rig 7; ")
    assert "fell back to rated TDP" in record["source"]


def test_gpu_fallback_still_requires_rated_watts(tmp_path, clock):
    config = base_config(tmp_path, power_source="nvml", tdp_watts=None)
    with pytest.raises(PowerSourceError, match="fallback"):
        collect(two_prompt_run(clock), config, clock=clock)


def test_live_source_samples_concurrently_and_clamps_to_the_run_window(tmp_path):
    class SteadyMeter:
        name = "steady"
        mode = "live"

        def read_watts(self) -> float:
            return 100.0

    def run():
        time.sleep(0.05)
        yield 40, True
        time.sleep(0.05)
        yield 60, True

    config = base_config(tmp_path, interval_s=0.01)
    record = read_record(collect(run, config, power_source=SteadyMeter()))
    samples = record["power"]["samples"]
    times = [t for t, _ in samples]
    assert len(samples) >= 3  # polled during the run, not just at the edges
    assert all(t1 > t0 for t0, t1 in zip(times, times[1:]))
    assert times[0] >= 0.0 and times[-1] == record["duration_s"]
    assert {w for _, w in samples} == {100.0}
    # constant power: trace integral matches watts * duration to float noise
    expected = 100.0 * record["duration_s"] / record["sample_count"]
    got = trapezoid_joules(samples, record["duration_s"]) / record["sample_count"]
    assert got == pytest.approx(expected, rel=1e-9)


def test_registered_custom_source_is_buildable(tmp_path, clock):
    from sustaincollect import build_source, register_power_source

    register_power_source("bench-meter", lambda cfg: (TdpSource(42.0), None))
    try:
        config = base_config(tmp_path, power_source="bench-meter", tdp_watts=None)
        source, warning = build_source(config)
        assert (source.watts, warning) == (42.0, None)
        record = read_record(collect(two_prompt_run(clock), config, clock=clock))
        assert record["power"] == {"kind": "tdp", "tdp_watts": 42.0}
    finally:
        import sustaincollect.sources as sources

        sources._SOURCE_BUILDERS.pop("bench-meter", None)


def test_trace_source_rejects_malformed_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"watts": 100}))
    with pytest.raises(PowerSourceError, match="pairs"):
        MockTraceSource.from_file(bad)
    decreasing = tmp_path / "decreasing.json"
    decreasing.write_text(json.dumps([[5.0, 100.0], [1.0, 90.0]]))
    with pytest.raises(PowerSourceError, match="increasing"):
        MockTraceSource.from_file(decreasing)
