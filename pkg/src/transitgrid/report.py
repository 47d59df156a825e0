"""Horizon-level aggregates computed from a snapshot stream."""
from __future__ import annotations

from dataclasses import dataclass

from .model import PERIOD_PEAK, Scenario
from .policy import demand_charge, energy_cost, upstream_cost


@dataclass(frozen=True)
class CostReport:
    energy_cost_usd: float
    demand_charge_usd: float
    upstream_purchase_usd: float
    per_step_energy_usd: tuple[float, ...]
    per_step_upstream_usd: tuple[float, ...]


@dataclass(frozen=True)
class HorizonSummary:
    policy: str
    costs: CostReport
    violation_counts: dict[str, int]
    station_energy_kwh: tuple[float, ...]
    beb_min_soc_kwh: tuple[float, ...]
    beb_max_soc_kwh: tuple[float, ...]
    emergency_override_count: int
    peak_charging_kwh: float
    below_min_count: int
    infeasible_step_count: int


def cost_report(stream, scenario: Scenario) -> CostReport:
    tariff = scenario.tariff
    dt = 24.0 / len(stream.snapshots)
    per_energy = tuple(
        sum(s.station_p_kw) * dt * tariff.tou_usd_per_kwh[s.t] for s in stream.snapshots
    )
    per_upstream = tuple(
        s.substation_kw * dt * tariff.lmp_usd_per_mwh[s.t] / 1000.0 for s in stream.snapshots
    )
    return CostReport(
        energy_cost_usd=energy_cost(stream, tariff),
        demand_charge_usd=demand_charge(stream, tariff),
        upstream_purchase_usd=upstream_cost(stream, tariff),
        per_step_energy_usd=per_energy,
        per_step_upstream_usd=per_upstream,
    )


def summarize(stream, scenario: Scenario, policy: str = "") -> HorizonSummary:
    dt = 24.0 / len(stream.snapshots)
    counts: dict[str, int] = {}
    station_energy = [0.0] * len(scenario.stations)
    n_bebs = len(scenario.bebs)
    min_soc = [float("inf")] * n_bebs
    max_soc = [float("-inf")] * n_bebs
    emergencies = 0
    peak_kwh = 0.0
    below_min = 0
    infeasible = 0
    for snap in stream.snapshots:
        for v in snap.violations:
            counts[v.kind] = counts.get(v.kind, 0) + 1
        for k, p in enumerate(snap.station_p_kw):
            station_energy[k] += p * dt
        for i, b in enumerate(snap.bebs):
            min_soc[i] = min(min_soc[i], b.soc_kwh)
            max_soc[i] = max(max_soc[i], b.soc_kwh)
            if b.below_min:
                below_min += 1
        emergencies += len(snap.emergency_beb_ids)
        if snap.tou_period == PERIOD_PEAK:
            peak_kwh += sum(snap.station_p_kw) * dt
        if snap.infeasible_at_zero:
            infeasible += 1
    return HorizonSummary(
        policy=policy,
        costs=cost_report(stream, scenario),
        violation_counts=counts,
        station_energy_kwh=tuple(station_energy),
        beb_min_soc_kwh=tuple(min_soc),
        beb_max_soc_kwh=tuple(max_soc),
        emergency_override_count=emergencies,
        peak_charging_kwh=peak_kwh,
        below_min_count=below_min,
        infeasible_step_count=infeasible,
    )


def summary_to_doc(summary: HorizonSummary) -> dict:
    return {
        "policy": summary.policy,
        "costs": {
            "energy_cost_usd": summary.costs.energy_cost_usd,
            "demand_charge_usd": summary.costs.demand_charge_usd,
            "upstream_purchase_usd": summary.costs.upstream_purchase_usd,
            "per_step_energy_usd": list(summary.costs.per_step_energy_usd),
            "per_step_upstream_usd": list(summary.costs.per_step_upstream_usd),
        },
        "violation_counts": dict(sorted(summary.violation_counts.items())),
        "station_energy_kwh": list(summary.station_energy_kwh),
        "beb_min_soc_kwh": list(summary.beb_min_soc_kwh),
        "beb_max_soc_kwh": list(summary.beb_max_soc_kwh),
        "emergency_override_count": summary.emergency_override_count,
        "peak_charging_kwh": summary.peak_charging_kwh,
        "below_min_count": summary.below_min_count,
        "infeasible_step_count": summary.infeasible_step_count,
        "units": {
            "costs": "USD",
            "station_energy_kwh": "kWh",
            "beb_min_soc_kwh": "kWh",
            "beb_max_soc_kwh": "kWh",
            "peak_charging_kwh": "kWh",
        },
    }
