"""TOU-aware opportunistic charging with network-feasibility repair, plus
tariff cost accounting.

The opportunistic policy charges parked buses at full feasible power
during off-peak and mid-peak steps and abstains during peak hours unless
a bus would otherwise drop below its minimum energy threshold before its
next charging opportunity (an emergency override, flagged per step). The
naive baseline charges whenever a bus is parked, regardless of period.

Both policies run the same two-phase procedure each step:

1. Propose: walk parked, charger-eligible buses in ascending state of
   charge (BEB id breaks ties) and assign each
   min(charger rating, headroom / step hours, station residual capacity).
2. Repair: solve the linearized feeder flow with the proposed station
   loads injected; while any voltage or ampacity limit is violated,
   reduce proposals at stations electrically on the violated paths by 10%
   of the original per round (at most 10 rounds, then zero) and re-solve.
   If limits are violated even with all charging at zero, the step is
   reported infeasible-at-zero: the inflexible load alone breaks limits.

Everything here is a pure function of (state, scenario, step), so
candidate policies can be evaluated concurrently; within a step the
ordering is deliberate and sequential.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import PERIOD_PEAK, Scenario, Tariff
from .powerflow import (
    Violation,
    check_limits,
    inject_station_loads,
    root_path_lines,
    solve_lindistflow,
)
from .transit import (
    CHARGER_Q_PER_P,
    FleetState,
    charging_stop_at,
    miles_to_next_charger,
)

REDUCTION_STEP = 0.1
MAX_REDUCTION_ROUNDS = 10


@dataclass(frozen=True)
class ChargeDecision:
    beb_id: int
    station_id: int
    power_kw: float


@dataclass(frozen=True)
class PolicyOutcome:
    """Decisions for one step plus the flags the snapshot must carry."""

    decisions: tuple[ChargeDecision, ...]
    emergency_beb_ids: frozenset[int] = frozenset()
    infeasible_at_zero: bool = False
    residual_violations: tuple[Violation, ...] = ()


def tou_period(t: int, tariff: Tariff) -> str:
    """Tariff period label for a step. Labels are stored on the tariff and
    validated against the wall clock at load time."""
    return tariff.tou_period[t]


@dataclass(frozen=True)
class _Proposal:
    beb_id: int
    station_id: int
    power_kw: float
    emergency: bool


def _propose(fleet: FleetState, scenario: Scenario, t: int, respect_peak: bool) -> list[_Proposal]:
    peak = tou_period(t, scenario.tariff) == PERIOD_PEAK
    dt_hours = scenario.grid.step_hours()
    residual = {st.id: st.capacity_kw() for st in scenario.stations}

    candidates = sorted(fleet.bebs, key=lambda b: (b.soc_kwh, b.beb_id))
    proposals: list[_Proposal] = []
    for state in candidates:
        beb = scenario.beb_by_id(state.beb_id)
        route = scenario.route_by_id(beb.route_id)
        station_id = charging_stop_at(route, t)
        if station_id is None:
            continue
        headroom_kwh = beb.e_max_kwh - state.soc_kwh
        if headroom_kwh <= 0:
            continue
        station = scenario.station_by_id(station_id)
        cap = min(station.charger_rating_kw, residual[station_id], headroom_kwh / dt_hours)
        if cap <= 0:
            continue
        emergency = False
        if respect_peak and peak:
            projected = state.soc_kwh - beb.consumption_kwh_per_mile * miles_to_next_charger(route, t)
            if projected >= beb.e_min_kwh:
                continue
            # Charge just enough to reach the next charger at e_min.
            emergency = True
            power = min(cap, (beb.e_min_kwh - projected) / dt_hours)
        else:
            power = cap
        proposals.append(_Proposal(state.beb_id, station_id, power, emergency))
        residual[station_id] -= power
    return proposals


def _station_powers(scenario: Scenario, proposals: list[_Proposal], factors: dict[int, float]):
    p = [0.0] * len(scenario.stations)
    pos = {st.id: k for k, st in enumerate(scenario.stations)}
    for pr in proposals:
        p[pos[pr.station_id]] += pr.power_kw * factors[pr.station_id]
    q = [pk * CHARGER_Q_PER_P for pk in p]
    return p, q


def _implicated_stations(
    scenario: Scenario, violations: list[Violation], paths: dict[int, frozenset[int]]
) -> set[int]:
    """Stations whose injection flows over a violated component. A load at
    node m travels exactly the lines on m's path to the substation, so a
    station is implicated by a line violation when that line is on its
    path, and by a node violation when the two paths share any line."""
    out: set[int] = set()
    for v in violations:
        if v.component_type == "line":
            culprit = {v.component_id - 1}
        else:
            culprit = set(paths[v.component_id])
        for st in scenario.stations:
            if paths[st.linked_node] & culprit:
                out.add(st.id)
    return out


def _repair(
    scenario: Scenario, t: int, proposals: list[_Proposal]
) -> tuple[dict[int, float], bool, tuple[Violation, ...]]:
    """Scale station proposals until the feeder is feasible.

    Returns (per-station factor, infeasible_at_zero, residual violations).
    """
    factors = {st.id: 1.0 for st in scenario.stations}
    paths = root_path_lines(scenario)

    def solve(current: dict[int, float]):
        p, q = _station_powers(scenario, proposals, current)
        sol = solve_lindistflow(scenario, inject_station_loads(scenario, t, p, q))
        return check_limits(sol, scenario, t)

    violations = solve(factors)
    rounds = 0
    while violations and rounds < MAX_REDUCTION_ROUNDS:
        targets = {
            s for s in _implicated_stations(scenario, violations, paths) if factors[s] > 0.0
        }
        if not targets:
            break
        for s in targets:
            factors[s] = max(0.0, factors[s] - REDUCTION_STEP)
        violations = solve(factors)
        rounds += 1

    # Reduction exhausted: zero every still-implicated station outright.
    while violations:
        targets = {
            s for s in _implicated_stations(scenario, violations, paths) if factors[s] > 0.0
        }
        if not targets:
            break
        for s in targets:
            factors[s] = 0.0
        violations = solve(factors)

    infeasible_at_zero = False
    if violations:
        zero = {st.id: 0.0 for st in scenario.stations}
        baseline = solve(zero)
        if baseline:
            infeasible_at_zero = True
            factors = zero
            violations = baseline
    return factors, infeasible_at_zero, tuple(violations)


def _policy_step(fleet: FleetState, scenario: Scenario, t: int, respect_peak: bool) -> PolicyOutcome:
    proposals = _propose(fleet, scenario, t, respect_peak)
    factors, infeasible, residual = _repair(scenario, t, proposals)
    decisions = []
    emergencies = set()
    for pr in proposals:
        power = pr.power_kw * factors[pr.station_id]
        if pr.emergency:
            emergencies.add(pr.beb_id)
        if power > 0.0:
            decisions.append(ChargeDecision(pr.beb_id, pr.station_id, power))
    return PolicyOutcome(tuple(decisions), frozenset(emergencies), infeasible, residual)


def decide_charges(fleet: FleetState, scenario: Scenario, t: int) -> PolicyOutcome:
    """Opportunistic TOU-aware charging: full feasible power off/mid-peak,
    abstain at peak except for flagged emergencies."""
    return _policy_step(fleet, scenario, t, respect_peak=True)


def naive_policy(fleet: FleetState, scenario: Scenario, t: int) -> PolicyOutcome:
    """Baseline: charge every parked bus at maximum feasible power in every
    period, with the same feasibility repair."""
    return _policy_step(fleet, scenario, t, respect_peak=False)


POLICIES = {
    "opportunistic": decide_charges,
    "naive": naive_policy,
}


def _step_hours(num_steps: int) -> float:
    return 24.0 / num_steps


def energy_cost(stream, tariff: Tariff) -> float:
    """Charging energy billed at the TOU price, summed over the horizon."""
    dt = _step_hours(len(stream.snapshots))
    total = 0.0
    for snap in stream.snapshots:
        total += sum(snap.station_p_kw) * dt * tariff.tou_usd_per_kwh[snap.t]
    return total


def demand_charge(stream, tariff: Tariff) -> float:
    """Demand rate times the maximum window-average total station power,
    over demand windows partitioning the horizon."""
    n = len(stream.snapshots)
    dt_minutes = 1440 // n
    window, rem = divmod(tariff.demand_interval_minutes, dt_minutes)
    if rem != 0 or window == 0 or n % window != 0:
        raise ValueError(
            f"demand interval {tariff.demand_interval_minutes} min does not "
            f"evenly divide the horizon of {n} steps at {dt_minutes} min each"
        )
    peak_kw = 0.0
    for start in range(0, n, window):
        avg = sum(sum(stream.snapshots[i].station_p_kw) for i in range(start, start + window)) / window
        peak_kw = max(peak_kw, avg)
    return tariff.demand_rate_usd_per_kw * peak_kw


def upstream_cost(stream, tariff: Tariff) -> float:
    """Substation energy priced at the locational marginal price."""
    dt = _step_hours(len(stream.snapshots))
    total = 0.0
    for snap in stream.snapshots:
        total += snap.substation_kw * dt * tariff.lmp_usd_per_mwh[snap.t] / 1000.0
    return total
