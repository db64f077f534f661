from __future__ import annotations

import json

import pytest

from sustaindex import (
    DirectJoules,
    EnergyParams,
    HopCost,
    SimScenario,
    TdpAnchor,
    build_ladders,
    detect_trap,
    dump_telemetry,
    energy_eval,
    energy_per_query,
    estimate_cor,
    load_scenario,
    load_telemetry,
    si_deficit,
    simulate,
    verify_theorems,
)


def mini_scenario(**overrides) -> SimScenario:
    kwargs = dict(
        model_name="sim-3b",
        hardware="gpu-sim",
        task="synthetic",
        energy=EnergyParams(
            gamma_static=0.387,
            alpha_mem=0.08,
            phi_by_precision={8: 0.01},
            native_bits=16,
            hops=10,
        ),
        latency={16: HopCost(0.004, 0.0), 8: HopCost(0.004, 0.096)},
        hop_noise={16: 1.0, 8: 0.97},
        batches=(1, 2, 4),
        precisions=(8, 16),
        n_queries=100,
        seed=7,
    )
    kwargs.update(overrides)
    return SimScenario(**kwargs)


# --- generative model ---------------------------------------------------------


def test_simulation_emits_one_record_per_cell_in_deterministic_order():
    out = simulate(mini_scenario())
    cells = [(r.config.precision_bits, r.config.batch_size) for r in out.records]
    assert cells == [(8, 1), (8, 2), (8, 4), (16, 1), (16, 2), (16, 4)]
    assert out.truth == mini_scenario()


def test_simulated_duration_amortizes_casting_over_the_batch():
    out = simulate(mini_scenario())
    by_cell = {(r.config.precision_bits, r.config.batch_size): r for r in out.records}
    # duration = hops * n * (a_comp * B + a_cast) / B
    assert by_cell[(8, 1)].duration_s == pytest.approx(1000 * 0.1, rel=1e-12)
    assert by_cell[(8, 4)].duration_s == pytest.approx(1000 * 0.112 / 4, rel=1e-12)
    assert by_cell[(16, 1)].duration_s == pytest.approx(1000 * 0.004, rel=1e-12)
    assert all(r.total_tokens == 1000 for r in out.records)


def test_simulated_throughput_reproduces_the_projected_cor():
    out = simulate(mini_scenario())
    by_cell = {(r.config.precision_bits, r.config.batch_size): r for r in out.records}
    for batch, expected in ((1, 24.0), (2, 12.0), (4, 6.0)):
        est = estimate_cor(by_cell[(8, batch)], by_cell[(16, batch)])
        assert est.cor == pytest.approx(expected, rel=1e-12)


def test_deterministic_accuracy_is_the_survival_probability():
    out = simulate(mini_scenario())
    for r in out.records:
        if r.config.precision_bits == 8:
            assert r.accuracy == pytest.approx(0.7374241268949281, rel=1e-15)
        else:
            assert r.accuracy == 1.0


def test_stochastic_accuracy_is_a_seeded_binomial_rate():
    out = simulate(mini_scenario(accuracy_mode="stochastic", n_queries=1000))
    for r in out.records:
        counts = r.accuracy * r.sample_count
        assert counts == pytest.approx(round(counts), abs=1e-9)  # integer successes
        if r.config.precision_bits == 16:
            assert r.accuracy == 1.0  # survival probability is exactly 1
        else:
            assert abs(r.accuracy - 0.7374241268949281) < 0.05


def test_identical_scenarios_simulate_bit_identically():
    a = simulate(mini_scenario(accuracy_mode="stochastic"))
    b = simulate(mini_scenario(accuracy_mode="stochastic"))
    assert a.records == b.records


def test_changing_the_seed_moves_stochastic_accuracy():
    a = simulate(mini_scenario(accuracy_mode="stochastic", n_queries=1000, seed=1))
    b = simulate(mini_scenario(accuracy_mode="stochastic", n_queries=1000, seed=2))
    assert any(
        ra.accuracy != rb.accuracy
        for ra, rb in zip(a.records, b.records)
        if ra.config.precision_bits == 8
    )


def test_model_energy_mode_reports_the_amortization_prediction():
    scenario = mini_scenario()
    out = simulate(scenario)
    for r in out.records:
        assert isinstance(r.power, DirectJoules)
        expected = energy_eval(scenario.energy, r.config.precision_bits, r.config.batch_size)
        assert r.power.joules_per_query == pytest.approx(expected, rel=1e-12)


def test_tdp_energy_mode_anchors_power_at_the_configured_wattage():
    out = simulate(mini_scenario(energy_mode="tdp", tdp_watts=350.0))
    for r in out.records:
        assert isinstance(r.power, TdpAnchor)
        assert r.power.tdp_watts == 350.0
        assert energy_per_query(r) == pytest.approx(350.0 * r.duration_s / r.sample_count)


def test_simulated_vram_is_affine_in_precision():
    out = simulate(mini_scenario(vram_base_gb=2.0, vram_gb_per_bit=0.25))
    by_bits = {r.config.precision_bits: r.peak_vram_gb for r in out.records}
    assert by_bits[8] == pytest.approx(4.0)
    assert by_bits[16] == pytest.approx(6.0)


def test_simulated_records_round_trip_through_the_wire_format(tmp_path):
    out = simulate(mini_scenario())
    path = tmp_path / "sim.jsonl"
    dump_telemetry(out.records, path)
    assert load_telemetry(path) == out.records


# --- scenario validation and loading ------------------------------------------


def test_scenario_requires_the_native_rung_and_its_coefficients():
    with pytest.raises(ValueError, match="native"):
        mini_scenario(precisions=(4, 8))
    with pytest.raises(ValueError, match="latency"):
        mini_scenario(precisions=(4, 8, 16))


def test_scenario_rejects_casting_cost_on_the_native_rung():
    with pytest.raises(ValueError, match="native rung casts nothing"):
        mini_scenario(latency={16: HopCost(0.004, 0.01), 8: HopCost(0.004, 0.096)})


def test_scenario_rejects_hop_noise_decreasing_in_precision():
    with pytest.raises(ValueError, match="non-decreasing"):
        mini_scenario(hop_noise={16: 0.9, 8: 0.97})
    with pytest.raises(ValueError, match="hop_noise"):
        mini_scenario(hop_noise={16: 1.0, 8: 1.5})


def test_scenario_rejects_bad_batches_modes_and_vram():
    with pytest.raises(ValueError):
        mini_scenario(batches=())
    with pytest.raises(ValueError):
        mini_scenario(batches=(0, 2))
    with pytest.raises(ValueError):
        mini_scenario(accuracy_mode="fuzzy")
    with pytest.raises(ValueError):
        mini_scenario(energy_mode="joules")
    with pytest.raises(ValueError):
        mini_scenario(vram_base_gb=0.0, vram_gb_per_bit=0.0)


def test_load_scenario_reads_the_shipped_configurations(fixtures):
    scenario = load_scenario(fixtures / "scenario_bstar64.json")
    assert scenario.energy.native_bits == 16
    assert set(scenario.precisions) == {4, 8, 16}
    assert max(scenario.batches) == 128
    assert scenario.energy_mode == "model"


def test_load_scenario_wraps_missing_keys_with_the_path(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"model": "x"}))
    with pytest.raises(ValueError, match="broken.json"):
        load_scenario(path)


# --- end-to-end trap reproduction ----------------------------------------------


def test_trap_scenario_reproduces_the_divergent_ladder(fixtures):
    out = simulate(load_scenario(fixtures / "scenario_h100_trap.json"))
    ladders, unanchored = build_ladders(out.records)
    assert len(ladders) == 1 and not unanchored
    verdict = detect_trap(ladders[0])
    assert verdict.gradient_sign == "divergent"
    si = verdict.si_by_precision
    assert si[16] > si[4] > si[8]
    assert si[4] == pytest.approx(0.6827600000000001, rel=1e-12)
    assert si[8] == pytest.approx(0.5847207815079807, rel=1e-12)
    assert si_deficit(si[16], si[4]) == pytest.approx(0.31724, abs=1e-9)


# --- closed-form consistency checks ---------------------------------------------


def test_verify_theorems_passes_on_the_batch_sweep_scenario(fixtures):
    report = verify_theorems(load_scenario(fixtures / "scenario_bstar64.json"))
    assert report.overall == "pass"
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["crossover[4bit]"].status == "pass"
    assert by_id["crossover[8bit]"].status == "pass"
    assert by_id["trap_flag"].status == "pass"
    assert by_id["cor_halving"].status == "pass"
    assert by_id["flat_accuracy"].status == "pass"
    assert "B*=64" in by_id["crossover[8bit]"].detail


def test_verify_theorems_brackets_the_critical_batch_within_one_grid_step(fixtures):
    report = verify_theorems(load_scenario(fixtures / "scenario_bstar64.json"))
    by_id = {c.check_id: c for c in report.checks}
    assert "[16, 32]" in by_id["crossover[4bit]"].detail  # B* = 24
    assert "[32, 64]" in by_id["crossover[8bit]"].detail  # B* = 64


def test_verify_theorems_is_inconclusive_without_a_straddling_grid():
    report = verify_theorems(mini_scenario(batches=(1, 2, 4)))  # B*(8) = 64
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["crossover[8bit]"].status == "inconclusive"
    assert "straddle" in by_id["crossover[8bit]"].detail


def test_verify_theorems_is_inconclusive_for_natively_supported_rungs():
    scenario = mini_scenario(
        energy=EnergyParams(
            gamma_static=0.387,
            alpha_mem=0.08,
            phi_by_precision={8: 0.0},
            native_bits=16,
            hops=10,
        )
    )
    report = verify_theorems(scenario)
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["crossover[8bit]"].status == "inconclusive"
    assert "native support" in by_id["crossover[8bit]"].detail


def test_verify_theorems_skips_the_grid_check_under_tdp_energy():
    report = verify_theorems(mini_scenario(energy_mode="tdp"))
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["crossover[8bit]"].status == "inconclusive"
    assert "energy_mode" in by_id["crossover[8bit]"].detail


def test_verify_theorems_needs_doubling_pairs_for_the_halving_check():
    report = verify_theorems(mini_scenario(batches=(1, 3)))
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["cor_halving"].status == "inconclusive"


def test_verify_theorems_flags_super_critical_ladders_as_out_of_scope():
    # every batch sits above B*(8) = 64, so no ladder is trap-eligible
    report = verify_theorems(mini_scenario(batches=(128, 256)))
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["trap_flag"].status == "inconclusive"


def test_crossover_at_the_grid_edge_is_bracketed_by_the_first_step():
    # alpha * (16 - 8) / phi(8) = 0.01 * 8 / 0.08 puts B* exactly at B = 1
    scenario = mini_scenario(
        energy=EnergyParams(
            gamma_static=0.387,
            alpha_mem=0.01,
            phi_by_precision={8: 0.08},
            native_bits=16,
            hops=10,
        )
    )
    report = verify_theorems(scenario)
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["crossover[8bit]"].status == "pass"
    assert "[1, 2]" in by_id["crossover[8bit]"].detail


def test_noiseless_hops_yield_perfect_accuracy_and_no_trap_claim():
    scenario = mini_scenario(hop_noise={16: 1.0, 8: 1.0})
    out = simulate(scenario)
    assert {r.accuracy for r in out.records} == {1.0}
    report = verify_theorems(scenario)
    by_id = {c.check_id: c for c in report.checks}
    # without a noise gap no rung is strictly lossy, so divergence is not owed
    assert by_id["trap_flag"].status == "inconclusive"
    assert "lossy" in by_id["trap_flag"].detail


def test_stochastic_accuracy_stays_within_the_binomial_band_across_batches():
    scenario = mini_scenario(accuracy_mode="stochastic", n_queries=1000)
    report = verify_theorems(scenario)
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["flat_accuracy"].status == "pass"
    assert by_id["trap_flag"].status == "pass"


def test_verify_theorems_fails_when_economy_rescues_a_lossy_rung():
    # casting-free latency plus a slimmer footprint lifts the quantized SI
    # above the anchor, so the sub-critical divergence claim must fail
    scenario = mini_scenario(
        latency={16: HopCost(0.004, 0.0), 8: HopCost(0.004, 0.0)},
        vram_base_gb=0.5,
        vram_gb_per_bit=0.5,
    )
    report = verify_theorems(scenario)
    by_id = {c.check_id: c for c in report.checks}
    assert by_id["trap_flag"].status == "fail"
    assert report.overall == "fail"


def test_theorem_report_serializes_to_plain_json(fixtures):
    report = verify_theorems(load_scenario(fixtures / "scenario_bstar64.json"))
    obj = report.to_json_dict()
    assert obj["overall"] == "pass"
    assert {c["status"] for c in obj["checks"]} == {"pass"}
    json.dumps(obj)  # must be JSON-serializable as-is
