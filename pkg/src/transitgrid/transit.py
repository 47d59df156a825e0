"""Timetable-driven fleet simulation at fixed step resolution.

Buses move piecewise-linearly between scheduled stops at the constant
speed the timetable implies, dwell at stops between arrival and departure,
and exchange battery energy: traction consumption while rolling, charger
power while parked. `step` is a pure state-transition function; the
horizon loop in `run_horizon` is sequential in t.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Iterable

from .model import Beb, Route, Scenario, TimeGrid
from .powerflow import check_limits, inject_station_loads, solve_lindistflow, substation_power

if TYPE_CHECKING:  # pragma: no cover
    from .policy import PolicyOutcome
    from .store import SnapshotStream

# Charging stations draw reactive power alongside active charging power at
# a fixed power factor typical of fast-charge rectifiers.
CHARGER_POWER_FACTOR = 0.98
CHARGER_Q_PER_P = (1.0 - CHARGER_POWER_FACTOR**2) ** 0.5 / CHARGER_POWER_FACTOR

# Slack below e_min before a state is flagged energy-deficient, so that
# last-ulp rounding in the energy update never raises a false alarm.
_SOC_FLAG_SLACK_KWH = 1e-9


class TimetableGapError(ValueError):
    """No scheduled dwell or drive covers the requested step."""


class DecisionError(ValueError):
    """A charge decision references a BEB that cannot accept it."""


@dataclass(frozen=True)
class AtStation:
    station_id: int


@dataclass(frozen=True)
class OnRoad:
    route_segment: int      # 0-based segment index within the route
    fraction: float         # progress along the segment, in [0, 1]


Location = AtStation | OnRoad


@dataclass(frozen=True)
class BebState:
    beb_id: int
    soc_kwh: float
    location: Location
    velocity_mph: float
    last_station: int
    next_station: int
    charging_kw: float = 0.0     # power drawn during the step starting here
    charge_kwh: float = 0.0      # energy added during that step
    discharge_kwh: float = 0.0   # traction energy spent during that step
    below_min: bool = False      # soc fell below e_min when this state was produced


@dataclass(frozen=True)
class FleetState:
    t: int
    bebs: tuple[BebState, ...]

    def by_id(self, beb_id: int) -> BebState:
        for b in self.bebs:
            if b.beb_id == beb_id:
                return b
        raise KeyError(f"no BEB state with id {beb_id}")


def _stop_index_at(route: Route, t: int) -> int | None:
    for k, stop in enumerate(route.stops):
        if stop.arrive_step <= t <= stop.depart_step:
            return k
    return None


def position_of(beb: Beb, route: Route, t: int, grid: TimeGrid) -> tuple[Location, float]:
    """Location and speed at step instant t, straight from the timetable.

    Dwelling covers [arrive, depart]; between consecutive stops the bus
    moves at the constant speed needed to cover the segment in the
    scheduled travel time, with linear progress.
    """
    stops = route.stops
    if t < stops[0].arrive_step or t > stops[-1].depart_step:
        raise TimetableGapError(
            f"route {route.id} has no scheduled activity at step {t} "
            f"(timetable covers [{stops[0].arrive_step}, {stops[-1].depart_step}])"
        )
    k = _stop_index_at(route, t)
    if k is not None:
        return AtStation(stops[k].station_id), 0.0
    for k in range(len(stops) - 1):
        dep = stops[k].depart_step
        arr = stops[k + 1].arrive_step
        if dep < t < arr:
            travel_hours = (arr - dep) * grid.step_minutes / 60.0
            fraction = (t - dep) / (arr - dep)
            return OnRoad(k, fraction), route.segment_miles[k] / travel_hours
    raise TimetableGapError(f"route {route.id} has no scheduled activity at step {t}")


def station_context(route: Route, t: int) -> tuple[int, int]:
    """(last visited station, station headed toward) at step t."""
    stops = route.stops
    k = _stop_index_at(route, t)
    if k is not None:
        nxt = stops[k + 1].station_id if k + 1 < len(stops) else stops[k].station_id
        return stops[k].station_id, nxt
    for k in range(len(stops) - 1):
        if stops[k].depart_step < t < stops[k + 1].arrive_step:
            return stops[k].station_id, stops[k + 1].station_id
    raise TimetableGapError(f"route {route.id} has no scheduled activity at step {t}")


def cumulative_miles(route: Route, t: int | float) -> float:
    """Miles completed along the route by instant t (piecewise linear,
    constant during dwells). Instants beyond the timetable clamp."""
    total = 0.0
    for k, miles in enumerate(route.segment_miles):
        dep = route.stops[k].depart_step
        arr = route.stops[k + 1].arrive_step
        if t >= arr:
            total += miles
        elif t > dep:
            total += miles * (t - dep) / (arr - dep)
            break
        else:
            break
    return total


def charging_stop_at(route: Route, t: int) -> int | None:
    """Station id if the bus dwells at a charger-equipped stop for the
    whole step [t, t+1), else None. The departure step itself is travel
    time, except at the final stop where the bus stays parked."""
    stops = route.stops
    for k, stop in enumerate(stops):
        if not stop.has_charger:
            continue
        is_last = k == len(stops) - 1
        if stop.arrive_step <= t < stop.depart_step or (is_last and t == stop.depart_step):
            return stop.station_id
    return None


def miles_to_next_charger(route: Route, t: int) -> float:
    """Distance from the current position to the arrival at the next
    charger-equipped stop (or to the end of the route if none remains)."""
    done = cumulative_miles(route, t)
    for k, stop in enumerate(route.stops):
        if stop.arrive_step > t and stop.has_charger:
            return cumulative_miles(route, stop.arrive_step) - done
    return cumulative_miles(route, route.stops[-1].arrive_step) - done


def discharge_energy(beb: Beb, miles: float) -> float:
    """Traction energy for a distance, kWh."""
    if miles < 0:
        raise ValueError(f"distance must be non-negative, got {miles}")
    return beb.consumption_kwh_per_mile * miles


def apply_charge(soc_kwh: float, power_kw: float, minutes: float, beb: Beb) -> float:
    """New stored energy after charging, capped at the usable maximum."""
    if power_kw < 0:
        raise ValueError(f"charging power must be non-negative, got {power_kw}")
    if minutes < 0:
        raise ValueError(f"duration must be non-negative, got {minutes}")
    return min(beb.e_max_kwh, soc_kwh + power_kw * minutes / 60.0)


def initial_fleet(scenario: Scenario) -> FleetState:
    states = []
    for beb in scenario.bebs:
        route = scenario.route_by_id(beb.route_id)
        location, velocity = position_of(beb, route, 0, scenario.grid)
        last, nxt = station_context(route, 0)
        states.append(BebState(beb.id, beb.soc0_kwh, location, velocity, last, nxt))
    return FleetState(0, tuple(states))


def _decision_power(decisions: Iterable, scenario: Scenario, fleet: FleetState) -> dict[int, float]:
    """Validate decisions against the current fleet and return kW per BEB."""
    power: dict[int, float] = {}
    for d in decisions:
        state = fleet.by_id(d.beb_id)
        beb = scenario.beb_by_id(d.beb_id)
        route = scenario.route_by_id(beb.route_id)
        station = charging_stop_at(route, fleet.t)
        if station is None or not isinstance(state.location, AtStation):
            raise DecisionError(f"beb[{d.beb_id}] is not parked at a charger stop at step {fleet.t}")
        if station != d.station_id:
            raise DecisionError(
                f"beb[{d.beb_id}] dwells at station {station}, decision names station {d.station_id}"
            )
        if d.power_kw < 0 or d.power_kw > scenario.station_by_id(d.station_id).charger_rating_kw:
            raise DecisionError(f"beb[{d.beb_id}] decision power {d.power_kw} outside [0, rating]")
        if d.beb_id in power:
            raise DecisionError(f"beb[{d.beb_id}] has more than one decision this step")
        power[d.beb_id] = d.power_kw
    _check_station_caps(decisions, scenario)
    return power


def _check_station_caps(decisions: Iterable, scenario: Scenario) -> None:
    totals: dict[int, float] = {}
    for d in decisions:
        totals[d.station_id] = totals.get(d.station_id, 0.0) + d.power_kw
    for station_id, total in totals.items():
        cap = scenario.station_by_id(station_id).capacity_kw()
        if total > cap + 1e-9:
            raise DecisionError(f"station[{station_id}] assigned {total} kW, capacity {cap} kW")


def resolve_step(
    fleet: FleetState, scenario: Scenario, decisions: Iterable
) -> tuple[FleetState, FleetState]:
    """Apply one step's decisions and motion.

    Returns (settled, advanced): `settled` is the state at t with the
    step's charging power and energy deltas filled in, `advanced` is the
    state at t+1. Energy bookkeeping is explicit so that
    soc(t+1) == soc(t) + charge_kwh - discharge_kwh holds term for term.
    """
    t = fleet.t
    if not 0 <= t < scenario.grid.num_steps:
        raise TimetableGapError(f"cannot step outside the horizon (t={t})")
    decisions = tuple(decisions)
    power = _decision_power(decisions, scenario, fleet)
    dt_hours = scenario.grid.step_hours()

    settled = []
    advanced = []
    last_step = t + 1 == scenario.grid.num_steps
    for state in fleet.bebs:
        beb = scenario.beb_by_id(state.beb_id)
        route = scenario.route_by_id(beb.route_id)
        kw = power.get(state.beb_id, 0.0)
        charge_kwh = min(beb.e_max_kwh - state.soc_kwh, kw * dt_hours) if kw > 0 else 0.0
        miles = cumulative_miles(route, t + 1) - cumulative_miles(route, t)
        discharge_kwh = discharge_energy(beb, miles)
        new_soc = state.soc_kwh + charge_kwh - discharge_kwh
        effective_kw = charge_kwh / dt_hours
        settled.append(
            replace(state, charging_kw=effective_kw, charge_kwh=charge_kwh, discharge_kwh=discharge_kwh)
        )
        if not last_step:
            location, velocity = position_of(beb, route, t + 1, scenario.grid)
            last, nxt = station_context(route, t + 1)
        else:
            location, velocity, last, nxt = state.location, state.velocity_mph, state.last_station, state.next_station
        advanced.append(
            BebState(
                beb_id=state.beb_id,
                soc_kwh=new_soc,
                location=location,
                velocity_mph=velocity,
                last_station=last,
                next_station=nxt,
                below_min=new_soc < beb.e_min_kwh - _SOC_FLAG_SLACK_KWH,
            )
        )
    return FleetState(t, tuple(settled)), FleetState(t + 1, tuple(advanced))


def step(fleet: FleetState, scenario: Scenario, decisions: Iterable) -> FleetState:
    """Advance the fleet one step under the given charge decisions."""
    _, advanced = resolve_step(fleet, scenario, decisions)
    return advanced


def run_horizon(
    scenario: Scenario,
    policy: "Callable[[FleetState, Scenario, int], PolicyOutcome]",
) -> "SnapshotStream":
    """Simulate the full day: positions, charging decisions, power flow,
    and limit checks at every step, recorded as one snapshot stream.

    Deterministic for fixed inputs; errors propagate with the failing
    timestep attached.
    """
    from .scenario_io import scenario_fingerprint
    from .store import SnapshotStream, build_snapshot

    from .powerflow import PowerFlowError

    fleet = initial_fleet(scenario)
    snapshots = []
    for t in range(scenario.grid.num_steps):
        try:
            outcome = policy(fleet, scenario, t)
            settled, advanced = resolve_step(fleet, scenario, outcome.decisions)
            station_p, station_q = station_injections(scenario, settled)
            loads = inject_station_loads(scenario, t, station_p, station_q)
            sol = solve_lindistflow(scenario, loads)
            violations = check_limits(sol, scenario, t)
            sub_kw, sub_kvar = substation_power(sol)
            snapshots.append(
                build_snapshot(
                    scenario, t, settled, sol, violations, outcome,
                    station_p, station_q, sub_kw, sub_kvar,
                )
            )
        except (PowerFlowError, TimetableGapError, DecisionError) as exc:
            raise type(exc)(f"step {t}: {exc}") from exc
        fleet = advanced
    return SnapshotStream(scenario_fingerprint(scenario), tuple(snapshots))


def station_injections(scenario: Scenario, settled: FleetState) -> tuple[list[float], list[float]]:
    """Total charging P/Q per station (scenario station order) implied by
    the settled per-BEB charging powers."""
    p = [0.0] * len(scenario.stations)
    pos = {st.id: k for k, st in enumerate(scenario.stations)}
    for state in settled.bebs:
        if state.charging_kw > 0 and isinstance(state.location, AtStation):
            p[pos[state.location.station_id]] += state.charging_kw
    q = [pk * CHARGER_Q_PER_P for pk in p]
    return p, q
