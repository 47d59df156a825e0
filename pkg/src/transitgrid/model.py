"""Domain model for the coupled bus-transit / distribution-feeder scenario.

A Scenario is an immutable description of one simulated day: the radial
feeder (nodes, lines), the charging stations and their coupling to feeder
nodes, the road network and timetabled routes, the bus fleet, the tariff,
and the time grid. Scenarios are validated on load and never mutated, so
they are safe to share across workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

PERIOD_OFF_PEAK = "off-peak"
PERIOD_MID_PEAK = "mid-peak"
PERIOD_PEAK = "peak"
TOU_PERIODS = (PERIOD_OFF_PEAK, PERIOD_MID_PEAK, PERIOD_PEAK)

MINUTES_PER_DAY = 1440

# Charger-to-charger route segments must stay inside this mileage band.
SEGMENT_MILES_MIN = 3.0
SEGMENT_MILES_MAX = 15.5

# Dwell at a charger-equipped stop, in steps (5-10 min on the 5-minute grid).
CHARGER_DWELL_MIN_STEPS = 1
CHARGER_DWELL_MAX_STEPS = 2


@dataclass(frozen=True)
class TimeGrid:
    """One simulated day split into fixed-width steps.

    Step 0 starts at `start_clock_hour` (5 means 05:00); the grid always
    spans exactly 24 hours, so step_minutes * num_steps == 1440.
    """

    start_clock_hour: int = 5
    step_minutes: int = 5
    num_steps: int = 288

    def minutes_since_start(self, t: int) -> int:
        return t * self.step_minutes

    def clock_minutes(self, t: int) -> int:
        """Wall-clock minute-of-day for step t (0..1439)."""
        return (self.start_clock_hour * 60 + t * self.step_minutes) % MINUTES_PER_DAY

    def step_hours(self) -> float:
        return self.step_minutes / 60.0


class StepRangeError(IndexError):
    """Raised for a step index outside [0, num_steps)."""


def timestep_clock(t: int, grid: TimeGrid) -> str:
    """Wall-clock label for step t, e.g. "Day0 05:00" or "Day1 04:55".

    The day marker increments when the clock wraps past midnight relative
    to the start of the horizon.
    """
    if not 0 <= t < grid.num_steps:
        raise StepRangeError(f"step {t} outside horizon [0, {grid.num_steps})")
    total = grid.start_clock_hour * 60 + t * grid.step_minutes
    day, minute_of_day = divmod(total, MINUTES_PER_DAY)
    hh, mm = divmod(minute_of_day, 60)
    return f"Day{day} {hh:02d}:{mm:02d}"


def period_for_clock(minute_of_day: int) -> str:
    """TOU period implied by a wall-clock minute: peak is [18:00, 24:00),
    off-peak [00:00, 05:00), mid-peak [05:00, 18:00)."""
    if minute_of_day >= 18 * 60:
        return PERIOD_PEAK
    if minute_of_day < 5 * 60:
        return PERIOD_OFF_PEAK
    return PERIOD_MID_PEAK


@dataclass(frozen=True)
class PowerNode:
    id: int
    is_substation: bool
    inflexible_p_kw: tuple[float, ...]
    inflexible_q_kvar: tuple[float, ...]
    v_min: float
    v_max: float
    # Stored for completeness; no solver or display computes it.
    angle_deg: float | None = None


@dataclass(frozen=True)
class PowerLine:
    from_node: int
    to_node: int
    r_pu: float
    x_pu: float
    i_max_pu: float


@dataclass(frozen=True)
class ChargingStation:
    id: int
    linked_node: int
    charger_rating_kw: float
    n_chargers: int
    layout_xy: tuple[float, float]

    def capacity_kw(self) -> float:
        return self.n_chargers * self.charger_rating_kw


@dataclass(frozen=True)
class CouplingLink:
    station_id: int
    node_id: int


@dataclass(frozen=True)
class Road:
    id: int
    endpoints: tuple[int, int]
    length_miles: float


@dataclass(frozen=True)
class RouteStop:
    station_id: int
    has_charger: bool
    arrive_step: int
    depart_step: int


@dataclass(frozen=True)
class Route:
    id: int
    stops: tuple[RouteStop, ...]
    segment_miles: tuple[float, ...]


@dataclass(frozen=True)
class Beb:
    id: int
    route_id: int
    capacity_kwh: float
    e_min_kwh: float
    e_max_kwh: float
    soc0_kwh: float
    consumption_kwh_per_mile: float


@dataclass(frozen=True)
class Tariff:
    tou_usd_per_kwh: tuple[float, ...]
    tou_period: tuple[str, ...]
    lmp_usd_per_mwh: tuple[float, ...]
    demand_rate_usd_per_kw: float
    demand_interval_minutes: int


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: TimeGrid
    base_kv: float
    base_mva: float
    nodes: tuple[PowerNode, ...]
    lines: tuple[PowerLine, ...]
    stations: tuple[ChargingStation, ...]
    coupling_links: tuple[CouplingLink, ...]
    roads: tuple[Road, ...]
    routes: tuple[Route, ...]
    bebs: tuple[Beb, ...]
    tariff: Tariff

    def node_by_id(self, node_id: int) -> PowerNode:
        node = self._node_index().get(node_id)
        if node is None:
            raise KeyError(f"no power node with id {node_id}")
        return node

    def station_by_id(self, station_id: int) -> ChargingStation:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(f"no charging station with id {station_id}")

    def route_by_id(self, route_id: int) -> Route:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise KeyError(f"no route with id {route_id}")

    def beb_by_id(self, beb_id: int) -> Beb:
        for b in self.bebs:
            if b.id == beb_id:
                return b
        raise KeyError(f"no BEB with id {beb_id}")

    def substation_id(self) -> int:
        for n in self.nodes:
            if n.is_substation:
                return n.id
        raise ValueError("scenario has no substation node")

    def counts(self) -> dict[str, int]:
        return {
            "nodes": len(self.nodes),
            "lines": len(self.lines),
            "stations": len(self.stations),
            "coupling_links": len(self.coupling_links),
            "roads": len(self.roads),
            "routes": len(self.routes),
            "bebs": len(self.bebs),
            "steps": self.grid.num_steps,
        }

    def _node_index(self) -> dict[int, PowerNode]:
        # Frozen dataclass: cache via object.__setattr__ on first use.
        cached = self.__dict__.get("_node_index_cache")
        if cached is None:
            cached = {n.id: n for n in self.nodes}
            object.__setattr__(self, "_node_index_cache", cached)
        return cached


@dataclass(frozen=True)
class Finding:
    """One violated invariant, located by a component path like "beb[12]"."""

    component: str
    message: str

    def __str__(self) -> str:
        return f"{self.component}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    def ok(self) -> bool:
        return not self.findings

    def __str__(self) -> str:
        if self.ok():
            return "valid"
        return "\n".join(str(f) for f in self.findings)


class ScenarioValidationError(ValueError):
    """Scenario violates one or more invariants; carries the full report."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(f"invalid scenario:\n{report}")


def _is_finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x == x and abs(x) != float("inf")


def _check_series(out: list[Finding], component: str, name: str, series, num_steps: int) -> None:
    if len(series) != num_steps:
        out.append(Finding(component, f"{name} has {len(series)} entries, expected {num_steps}"))
        return
    for i, v in enumerate(series):
        if not _is_finite(v):
            out.append(Finding(component, f"{name}[{i}] is not a finite number: {v!r}"))
            return


def _find_cycle(n_ids: set[int], lines: tuple[PowerLine, ...]) -> list[int] | None:
    """Return a node cycle (as an id list) if the line set contains one.

    Lines are folded into a forest with union-find; the first line whose
    endpoints are already connected closes a cycle, recovered as the
    forest path between the endpoints plus that line.
    """
    root: dict[int, int] = {i: i for i in n_ids}

    def find(x: int) -> int:
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    adj: dict[int, list[int]] = {i: [] for i in n_ids}
    for ln in lines:
        a, b = ln.from_node, ln.to_node
        if a not in adj or b not in adj:
            continue
        if a == b:
            return [a, a]
        ra, rb = find(a), find(b)
        if ra == rb:
            # Path a..b through the forest built so far, plus line (a, b).
            prev: dict[int, int | None] = {a: None}
            queue = [a]
            while queue:
                u = queue.pop(0)
                if u == b:
                    break
                for v in adj[u]:
                    if v not in prev:
                        prev[v] = u
                        queue.append(v)
            path = [b]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return list(reversed(path)) + [a]
        root[ra] = rb
        adj[a].append(b)
        adj[b].append(a)
    return None


def _validate_grid(out: list[Finding], grid: TimeGrid) -> None:
    if grid.num_steps <= 0:
        out.append(Finding("time_grid", f"num_steps must be positive, got {grid.num_steps}"))
        return
    if grid.step_minutes <= 0:
        out.append(Finding("time_grid", f"step_minutes must be positive, got {grid.step_minutes}"))
        return
    if grid.step_minutes * grid.num_steps != MINUTES_PER_DAY:
        out.append(
            Finding(
                "time_grid",
                f"step_minutes * num_steps must equal {MINUTES_PER_DAY}, "
                f"got {grid.step_minutes} * {grid.num_steps} = {grid.step_minutes * grid.num_steps}",
            )
        )
    if not 0 <= grid.start_clock_hour < 24:
        out.append(Finding("time_grid", f"start_clock_hour must be in [0, 24), got {grid.start_clock_hour}"))


def _validate_nodes(out: list[Finding], s: Scenario) -> None:
    ids = [n.id for n in s.nodes]
    if sorted(ids) != list(range(1, len(s.nodes) + 1)):
        out.append(Finding("nodes", f"node ids must be exactly 1..{len(s.nodes)}, got {sorted(ids)[:10]}..."))
    subs = [n.id for n in s.nodes if n.is_substation]
    if len(subs) != 1:
        out.append(Finding("nodes", f"exactly one substation required, found {len(subs)}"))
    elif subs != [1]:
        out.append(Finding(f"node[{subs[0]}]", "the substation must be node 1"))
    for n in s.nodes:
        comp = f"node[{n.id}]"
        if not (0 < n.v_min < n.v_max):
            out.append(Finding(comp, f"voltage bounds must satisfy 0 < v_min < v_max, got [{n.v_min}, {n.v_max}]"))
        _check_series(out, comp, "inflexible_p_kw", n.inflexible_p_kw, s.grid.num_steps)
        _check_series(out, comp, "inflexible_q_kvar", n.inflexible_q_kvar, s.grid.num_steps)
        if n.is_substation and (any(n.inflexible_p_kw) or any(n.inflexible_q_kvar)):
            # The linearized solver pins the slack node; a load there would
            # silently vanish from every flow, so reject instead.
            out.append(Finding(comp, "substation inflexible load must be all zeros"))


def _validate_lines(out: list[Finding], s: Scenario) -> None:
    node_ids = {n.id for n in s.nodes}
    for k, ln in enumerate(s.lines):
        comp = f"line[{k + 1}]"
        for end in (ln.from_node, ln.to_node):
            if end not in node_ids:
                out.append(Finding(comp, f"references nonexistent node {end}"))
        if ln.from_node == ln.to_node:
            out.append(Finding(comp, f"self-loop at node {ln.from_node}"))
        if ln.r_pu < 0 or ln.x_pu < 0:
            out.append(Finding(comp, f"impedance must be non-negative, got r={ln.r_pu}, x={ln.x_pu}"))
        if not ln.i_max_pu > 0:
            out.append(Finding(comp, f"i_max_pu must be positive, got {ln.i_max_pu}"))

    if len(s.lines) != len(s.nodes) - 1:
        out.append(
            Finding("lines", f"radial feeder needs n_nodes - 1 = {len(s.nodes) - 1} lines, got {len(s.lines)}")
        )
    cycle = _find_cycle(node_ids, s.lines)
    if cycle is not None:
        out.append(Finding("lines", "line set contains a cycle: " + " - ".join(str(i) for i in cycle)))
    elif len(s.lines) == len(s.nodes) - 1:
        # Acyclic with n-1 edges, so connectivity only needs a reach check.
        reach = {1}
        frontier = [1]
        adj: dict[int, list[int]] = {n.id: [] for n in s.nodes}
        for ln in s.lines:
            if ln.from_node in adj and ln.to_node in adj:
                adj[ln.from_node].append(ln.to_node)
                adj[ln.to_node].append(ln.from_node)
        while frontier:
            u = frontier.pop()
            for v in adj[u]:
                if v not in reach:
                    reach.add(v)
                    frontier.append(v)
        missing = sorted(node_ids - reach)
        if missing:
            out.append(Finding("lines", f"nodes unreachable from the substation: {missing}"))


def _validate_stations(out: list[Finding], s: Scenario) -> None:
    node_ids = {n.id for n in s.nodes}
    ids = [st.id for st in s.stations]
    if sorted(ids) != list(range(1, len(s.stations) + 1)):
        out.append(Finding("stations", f"station ids must be exactly 1..{len(s.stations)}, got {sorted(ids)}"))
    substation_ids = {n.id for n in s.nodes if n.is_substation}
    for st in s.stations:
        comp = f"station[{st.id}]"
        if st.linked_node not in node_ids:
            out.append(Finding(comp, f"linked to nonexistent node {st.linked_node}"))
        elif st.linked_node in substation_ids:
            # Charging at the slack bus would bypass every feeder line.
            out.append(Finding(comp, f"cannot couple to the substation node {st.linked_node}"))
        if not st.charger_rating_kw > 0:
            out.append(Finding(comp, f"charger_rating_kw must be positive, got {st.charger_rating_kw}"))
        if st.n_chargers < 1:
            out.append(Finding(comp, f"n_chargers must be >= 1, got {st.n_chargers}"))

    station_ids = {st.id for st in s.stations}
    linked = {}
    for k, cl in enumerate(s.coupling_links):
        comp = f"coupling_link[{k + 1}]"
        if cl.station_id not in station_ids:
            out.append(Finding(comp, f"references nonexistent station {cl.station_id}"))
            continue
        if cl.node_id not in node_ids:
            out.append(Finding(comp, f"references nonexistent node {cl.node_id}"))
            continue
        if cl.station_id in linked:
            out.append(Finding(comp, f"station {cl.station_id} has more than one coupling link"))
        linked[cl.station_id] = cl.node_id
        try:
            st = s.station_by_id(cl.station_id)
            if st.linked_node != cl.node_id:
                out.append(
                    Finding(comp, f"links station {cl.station_id} to node {cl.node_id}, "
                                  f"but the station declares node {st.linked_node}")
                )
        except KeyError:
            pass
    missing_links = sorted(station_ids - set(linked))
    if missing_links:
        out.append(Finding("coupling_links", f"stations without a coupling link: {missing_links}"))
    used_nodes = list(linked.values())
    if len(set(used_nodes)) != len(used_nodes):
        dupes = sorted({n for n in used_nodes if used_nodes.count(n) > 1})
        out.append(Finding("coupling_links", f"multiple stations share power node(s) {dupes}"))


def _validate_roads(out: list[Finding], s: Scenario) -> None:
    station_ids = {st.id for st in s.stations}
    ids = [r.id for r in s.roads]
    if sorted(ids) != list(range(1, len(s.roads) + 1)):
        out.append(Finding("roads", f"road ids must be exactly 1..{len(s.roads)}, got {sorted(ids)}"))
    for r in s.roads:
        comp = f"road[{r.id}]"
        a, b = r.endpoints
        if a == b:
            out.append(Finding(comp, f"endpoints must be distinct stations, got {a} twice"))
        for end in (a, b):
            if end not in station_ids:
                out.append(Finding(comp, f"references nonexistent station {end}"))
        if not r.length_miles > 0:
            out.append(Finding(comp, f"length_miles must be positive, got {r.length_miles}"))


def _validate_routes(out: list[Finding], s: Scenario) -> None:
    station_ids = {st.id for st in s.stations}
    ids = [r.id for r in s.routes]
    if sorted(ids) != list(range(1, len(s.routes) + 1)):
        out.append(Finding("routes", f"route ids must be exactly 1..{len(s.routes)}, got {sorted(ids)}"))
    for r in s.routes:
        comp = f"route[{r.id}]"
        if len(r.stops) < 1:
            out.append(Finding(comp, "route has no stops"))
            continue
        if len(r.segment_miles) != len(r.stops) - 1:
            out.append(
                Finding(comp, f"{len(r.stops)} stops need {len(r.stops) - 1} segment distances, "
                              f"got {len(r.segment_miles)}")
            )
            continue
        prev_depart = None
        for k, stop in enumerate(r.stops):
            where = f"{comp}.stop[{k}]"
            if stop.station_id not in station_ids:
                out.append(Finding(where, f"references nonexistent station {stop.station_id}"))
            if not 0 <= stop.arrive_step <= stop.depart_step < s.grid.num_steps:
                out.append(
                    Finding(where, f"needs 0 <= arrive <= depart < {s.grid.num_steps}, "
                                   f"got arrive={stop.arrive_step}, depart={stop.depart_step}")
                )
            if prev_depart is not None and stop.arrive_step <= prev_depart:
                out.append(
                    Finding(where, f"arrive step {stop.arrive_step} must come strictly after "
                                   f"the previous departure at {prev_depart}")
                )
            is_last = k == len(r.stops) - 1
            if stop.has_charger and not is_last:
                dwell = stop.depart_step - stop.arrive_step
                if not CHARGER_DWELL_MIN_STEPS <= dwell <= CHARGER_DWELL_MAX_STEPS:
                    out.append(
                        Finding(where, f"charger-stop dwell must be {CHARGER_DWELL_MIN_STEPS}-"
                                       f"{CHARGER_DWELL_MAX_STEPS} steps, got {dwell}")
                    )
            prev_depart = stop.depart_step
        for k, miles in enumerate(r.segment_miles):
            where = f"{comp}.segment[{k}]"
            if not miles > 0:
                out.append(Finding(where, f"segment distance must be positive, got {miles}"))
                continue
            if r.stops[k].has_charger and r.stops[k + 1].has_charger:
                if not SEGMENT_MILES_MIN <= miles <= SEGMENT_MILES_MAX:
                    out.append(
                        Finding(where, f"charger-to-charger distance must lie in "
                                       f"[{SEGMENT_MILES_MIN}, {SEGMENT_MILES_MAX}] miles, got {miles}")
                    )


def _validate_bebs(out: list[Finding], s: Scenario) -> None:
    route_ids = {r.id for r in s.routes}
    ids = [b.id for b in s.bebs]
    if sorted(ids) != list(range(1, len(s.bebs) + 1)):
        out.append(Finding("bebs", f"BEB ids must be exactly 1..{len(s.bebs)}, got {sorted(ids)[:10]}..."))
    for b in s.bebs:
        comp = f"beb[{b.id}]"
        if b.route_id not in route_ids:
            out.append(Finding(comp, f"references nonexistent route {b.route_id}"))
        if not (0 <= b.e_min_kwh < b.e_max_kwh <= b.capacity_kwh):
            out.append(
                Finding(comp, f"energy thresholds must satisfy 0 <= e_min < e_max <= capacity, "
                              f"got e_min={b.e_min_kwh}, e_max={b.e_max_kwh}, capacity={b.capacity_kwh}")
            )
        if not (b.e_min_kwh <= b.soc0_kwh <= b.e_max_kwh):
            out.append(
                Finding(comp, f"initial energy soc0={b.soc0_kwh} outside [e_min, e_max] = "
                              f"[{b.e_min_kwh}, {b.e_max_kwh}]")
            )
        if not b.consumption_kwh_per_mile > 0:
            out.append(Finding(comp, f"consumption must be positive, got {b.consumption_kwh_per_mile}"))


def _validate_tariff(out: list[Finding], s: Scenario) -> None:
    t = s.tariff
    _check_series(out, "tariff", "tou_usd_per_kwh", t.tou_usd_per_kwh, s.grid.num_steps)
    _check_series(out, "tariff", "lmp_usd_per_mwh", t.lmp_usd_per_mwh, s.grid.num_steps)
    if len(t.tou_period) != s.grid.num_steps:
        out.append(Finding("tariff", f"tou_period has {len(t.tou_period)} labels, expected {s.grid.num_steps}"))
    else:
        for i, label in enumerate(t.tou_period):
            if label not in TOU_PERIODS:
                out.append(Finding("tariff", f"tou_period[{i}] has unknown label {label!r}"))
                break
            expected = period_for_clock(s.grid.clock_minutes(i))
            if label != expected:
                out.append(
                    Finding("tariff", f"tou_period[{i}] is {label!r} but the wall clock "
                                      f"({timestep_clock(i, s.grid)}) implies {expected!r}")
                )
                break
    if len(t.tou_usd_per_kwh) == s.grid.num_steps and any(p < 0 for p in t.tou_usd_per_kwh):
        out.append(Finding("tariff", "tou_usd_per_kwh has negative prices"))
    if len(t.lmp_usd_per_mwh) == s.grid.num_steps and any(p < 0 for p in t.lmp_usd_per_mwh):
        out.append(Finding("tariff", "lmp_usd_per_mwh has negative prices"))
    if t.demand_rate_usd_per_kw < 0:
        out.append(Finding("tariff", f"demand_rate_usd_per_kw must be >= 0, got {t.demand_rate_usd_per_kw}"))
    if t.demand_interval_minutes not in (15, 60):
        out.append(Finding("tariff", f"demand_interval_minutes must be 15 or 60, got {t.demand_interval_minutes}"))


def validate_scenario(s: Scenario) -> ValidationReport:
    """Check every scenario invariant; the report lists all violations.

    An empty report means the scenario is valid. Nothing is repaired.
    """
    out: list[Finding] = []
    if s.base_kv <= 0 or s.base_mva <= 0:
        out.append(Finding("per_unit_bases", f"bases must be positive, got kv={s.base_kv}, mva={s.base_mva}"))
    _validate_grid(out, s.grid)
    if any(f.component == "time_grid" for f in out):
        return ValidationReport(tuple(out))
    _validate_nodes(out, s)
    _validate_lines(out, s)
    _validate_stations(out, s)
    _validate_roads(out, s)
    _validate_routes(out, s)
    _validate_bebs(out, s)
    _validate_tariff(out, s)
    return ValidationReport(tuple(out))
