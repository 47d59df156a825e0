"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with `pytest tests/test_acceptance.py -v -s`).

Criteria covered, at their stated tolerances:
  1. scale fidelity of the bundled scenario (exact counts, loader rejects
     deviations, loads in under a second)
  2. power-flow oracle equivalence on 200 random radial trees at 1e-12 pu
  3. exact per-step energy conservation and substation balance at 1e-9
  4. peak abstinence of the opportunistic policy
  5. energy-cost dominance of opportunistic over naive on the bundled
     scenario and 20 randomized variants without emergencies
  6. feasibility of every non-flagged step plus detector sensitivity to a
     5 MW injection
  7. cost arithmetic against brute-force recomputation at 1e-9 and the
     $7,500 demand-charge hand case
  8. bitwise determinism of exports, import/export round trip, and pure
     API projections
  9. the primary stack runs with no dashboard built
"""
import dataclasses
import json
import random
import time

import pytest
from fastapi.testclient import TestClient

import transitgrid as tg
from transitgrid.model import PERIOD_PEAK
from transitgrid.policy import demand_charge, energy_cost, upstream_cost
from transitgrid.powerflow import NodalLoad, inject_station_loads, solve_lindistflow, check_limits
from transitgrid.report import summarize
from transitgrid.scenario_io import scenario_to_doc
from transitgrid.service import create_app
from transitgrid.store import RunArtifact, SnapshotStream
from transitgrid.synth import random_scenario
from transitgrid.cli import main

from helpers import (
    FIVE_MIN_GRID,
    brute_force_flows,
    brute_force_voltages,
    make_snapshot,
    make_tariff,
    random_tree_loads,
    random_tree_scenario,
)

EXPECTED_COUNTS = {
    "nodes": 33,
    "lines": 32,
    "stations": 7,
    "coupling_links": 7,
    "roads": 6,
    "routes": 9,
    "bebs": 45,
    "steps": 288,
}


def test_scale_fidelity(tmp_path):
    t0 = time.perf_counter()
    scenario = tg.load_scenario(tg.bundled_scenario_path())
    elapsed = time.perf_counter() - t0
    assert scenario.counts() == EXPECTED_COUNTS
    assert elapsed < 1.0, f"load took {elapsed:.2f}s"

    # Any deviation from the declared shape is rejected, not repaired.
    doc = scenario_to_doc(scenario)
    del doc["bebs"][0]
    pruned = tmp_path / "pruned.scenario"
    pruned.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(tg.ScenarioValidationError):
        tg.load_scenario(pruned)
    print("ACCEPTANCE scale-fidelity: PASS")


def test_scale_fidelity_rejects_broken_topology(tmp_path):
    scenario = tg.load_scenario(tg.bundled_scenario_path())
    doc = scenario_to_doc(scenario)
    doc["lines"] = doc["lines"][:-1]  # 31 lines cannot span 33 nodes
    doc["counts"]["lines"] = 31
    path = tmp_path / "broken.scenario"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(tg.ScenarioValidationError):
        tg.load_scenario(path)
    print("ACCEPTANCE scale-fidelity-rejection: PASS")


def test_powerflow_oracle_200_trees():
    rng = random.Random(20260810)
    t0 = time.perf_counter()
    for _ in range(200):
        n = rng.randint(2, 50)
        scenario = random_tree_scenario(rng, n)
        p, q = random_tree_loads(rng, n)
        sol = solve_lindistflow(scenario, NodalLoad(p, q))
        p_ref, q_ref, down = brute_force_flows(scenario, p, q)
        for k in range(len(scenario.lines)):
            assert abs(sol.p_flow_pu[k] - p_ref[k]) <= 1e-12
            assert abs(sol.q_flow_pu[k] - q_ref[k]) <= 1e-12
        v_ref = brute_force_voltages(scenario, p_ref, q_ref, down)
        for k, node in enumerate(scenario.nodes):
            assert abs(sol.v_sq[k] - v_ref[node.id]) <= 1e-12
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"oracle sweep took {elapsed:.2f}s"
    print(f"ACCEPTANCE powerflow-oracle: PASS ({elapsed:.2f}s)")


def test_conservation_suite(bundled):
    t0 = time.perf_counter()
    stream = tg.run_horizon(bundled, tg.decide_charges)
    # Per-BEB energy bookkeeping is exact, term for term.
    for t in range(287):
        now, nxt = stream.snapshots[t], stream.snapshots[t + 1]
        for b_now, b_next in zip(now.bebs, nxt.bebs):
            assert b_next.soc_kwh == b_now.soc_kwh + b_now.charge_kwh - b_now.discharge_kwh
    # Lossless balance: substation export equals total nodal load.
    for snap in stream.snapshots:
        total = sum(snap.node_p_load_kw)
        assert snap.substation_kw == pytest.approx(total, rel=1e-9)
        assert snap.substation_kvar == pytest.approx(sum(snap.node_q_load_kvar), rel=1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"conservation suite took {elapsed:.2f}s"
    print(f"ACCEPTANCE conservation: PASS ({elapsed:.2f}s)")


def test_peak_abstinence(opportunistic_stream):
    billed_peak_kwh = 0.0
    for snap in opportunistic_stream.snapshots:
        if snap.tou_period != PERIOD_PEAK:
            continue
        if not snap.emergency_beb_ids:
            billed_peak_kwh += sum(snap.station_p_kw) * (5.0 / 60.0)
        # Any bus charging at peak must carry the emergency flag.
        for b in snap.bebs:
            if b.charging_kw > 0:
                assert b.beb_id in snap.emergency_beb_ids
    assert billed_peak_kwh == 0.0
    print("ACCEPTANCE peak-abstinence: PASS")


def test_cost_dominance_bundled_and_randomized(bundled):
    def both_costs(scenario):
        opp = tg.run_horizon(scenario, tg.decide_charges)
        nai = tg.run_horizon(scenario, tg.naive_policy)
        s_opp = summarize(opp, scenario, "opportunistic")
        s_nai = summarize(nai, scenario, "naive")
        return s_opp, s_nai

    s_opp, s_nai = both_costs(bundled)
    assert s_opp.emergency_override_count == 0
    assert s_opp.costs.energy_cost_usd <= s_nai.costs.energy_cost_usd

    for seed in range(20):
        scenario = random_scenario(seed)
        assert tg.validate_scenario(scenario).ok()
        s_opp, s_nai = both_costs(scenario)
        assert s_opp.emergency_override_count == 0, f"seed {seed} raised emergencies"
        assert s_nai.emergency_override_count == 0
        assert s_opp.costs.energy_cost_usd <= s_nai.costs.energy_cost_usd, f"seed {seed}"
    print("ACCEPTANCE cost-dominance: PASS (bundled + 20 seeds)")


def test_feasibility_and_detector_sensitivity(bundled, opportunistic_stream, naive_stream):
    for stream in (opportunistic_stream, naive_stream):
        for snap in stream.snapshots:
            if not snap.infeasible_at_zero:
                assert snap.violations == ()

    # Detector sensitivity: a 5 MW station load breaks voltage and ampacity.
    inject = [0.0] * 7
    inject[6] = 5000.0  # station 7 sits on the deepest feeder branch
    loads = inject_station_loads(bundled, 156, inject, [0.0] * 7)
    sol = solve_lindistflow(bundled, loads)
    violations = check_limits(sol, bundled, 156)
    kinds = {v.kind for v in violations}
    assert "undervoltage" in kinds
    assert "overcurrent" in kinds
    print("ACCEPTANCE feasibility: PASS")


def test_cost_arithmetic(bundled, opportunistic_stream, naive_stream):
    tariff = bundled.tariff
    dt = 5.0 / 60.0
    for stream in (opportunistic_stream, naive_stream):
        expected_energy = sum(
            b.charging_kw * dt * tariff.tou_usd_per_kwh[snap.t]
            for snap in stream.snapshots
            for b in snap.bebs
        )
        assert energy_cost(stream, tariff) == pytest.approx(expected_energy, rel=1e-9)

        expected_upstream = sum(
            sum(snap.node_p_load_kw) * dt * tariff.lmp_usd_per_mwh[snap.t] / 1000.0
            for snap in stream.snapshots
        )
        assert upstream_cost(stream, tariff) == pytest.approx(expected_upstream, rel=1e-9)

        window = tariff.demand_interval_minutes // 5
        totals = [sum(snap.station_p_kw) for snap in stream.snapshots]
        best = max(
            sum(totals[start:start + window]) / window for start in range(0, 288, window)
        )
        assert demand_charge(stream, tariff) == pytest.approx(
            tariff.demand_rate_usd_per_kw * best, rel=1e-9
        )

    # Hand case: one 15-minute window at a constant 500 kW and $15/kW.
    snaps = tuple(make_snapshot(t, (500.0,) if t < 3 else (0.0,)) for t in range(288))
    hand = SnapshotStream("hand", snaps)
    assert demand_charge(hand, make_tariff(FIVE_MIN_GRID, demand_interval=15)) == 7500.0
    print("ACCEPTANCE cost-arithmetic: PASS")


def test_determinism_and_round_trip(tmp_path, bundled, opportunistic_stream):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    scenario_path = str(tg.bundled_scenario_path())
    assert main(["simulate", "--scenario", scenario_path, "--out", str(out1)]) == 0
    assert main(["simulate", "--scenario", scenario_path, "--out", str(out2)]) == 0
    bytes1 = (out1 / "run-opportunistic.json").read_bytes()
    bytes2 = (out2 / "run-opportunistic.json").read_bytes()
    assert bytes1 == bytes2

    run = tg.import_run(out1 / "run-opportunistic.json")
    assert run.stream == opportunistic_stream
    assert run.scenario == bundled

    client = TestClient(create_app(run))
    for url in ("/api/v1/scenario", "/api/v1/snapshots/156", "/api/v1/series/node-18/v_pu", "/api/v1/summary"):
        assert client.get(url).content == client.get(url).content
    print("ACCEPTANCE determinism-round-trip: PASS")


def test_primary_stack_standalone(tmp_path):
    # Scenario -> simulation -> export -> service, entirely in-process and
    # with no dashboard assets involved anywhere.
    scenario = random_scenario(99)
    stream = tg.run_horizon(scenario, tg.decide_charges)
    path = tmp_path / "run.json"
    tg.export_run(stream, scenario, "opportunistic", path)
    run = tg.import_run(path)
    client = TestClient(create_app(run))
    assert client.get("/api/v1/scenario").status_code == 200
    assert client.get("/api/v1/summary").status_code == 200
    print("ACCEPTANCE standalone-primary: PASS")
