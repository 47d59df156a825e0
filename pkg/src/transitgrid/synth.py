"""Scenario synthesis: the bundled Park City-style test case and seeded
randomized variants for robustness runs.

The feeder is the standard 33-bus radial distribution test case
(12.66 kV; branch impedances in ohms, nominal bus loads in kW/kvar),
scaled by a smooth diurnal shape. The transit side is synthesized: seven
charger-equipped stops placed to mimic a mountain-town layout, a six-road
tree connecting them, and nine cyclic timetabled routes over that tree.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .model import (
    Beb,
    ChargingStation,
    CouplingLink,
    PowerLine,
    PowerNode,
    Road,
    Route,
    RouteStop,
    Scenario,
    Tariff,
    TimeGrid,
    period_for_clock,
)
from .powerflow import feeder_topology
from .transit import CHARGER_Q_PER_P

# Standard 33-bus feeder: (from, to, R ohm, X ohm); loads at the to-node.
FEEDER33_BRANCHES = (
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
)

FEEDER33_LOADS_KW_KVAR = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30),
    12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20),
    17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40),
    22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25),
    27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600), 31: (150, 70),
    32: (210, 100), 33: (60, 40),
}

BASE_KV = 12.66
BASE_MVA = 10.0

STATION_NAMES = (
    "Kimball Junction", "Canyons", "Old Town", "Deer Valley",
    "Prospector", "Pinebrook", "Jeremy Ranch",
)
STATION_XY = ((0.0, 8.0), (1.5, 5.0), (3.0, 2.0), (4.5, 0.5), (5.0, 3.5), (-3.0, 8.5), (-5.5, 9.5))
STATION_NODES = (3, 5, 7, 11, 21, 24, 30)
STATION_CHARGERS = (4, 2, 4, 2, 2, 2, 2)
CHARGER_RATING_KW = 500.0

# Road tree over the seven stations: (station a, station b, miles).
ROADS = ((1, 2, 3.4), (2, 3, 3.8), (3, 4, 3.1), (3, 5, 3.2), (1, 6, 3.6), (6, 7, 3.0))

# Cyclic station walks; consecutive stops may skip intermediate stations
# (express legs), in which case the distance is the tree-path length.
ROUTE_WALKS = (
    (1, 2, 3, 2),
    (3, 4, 3, 5),
    (1, 6, 7, 6),
    (7, 6, 1, 2, 3, 2, 1, 6),
    (2, 3, 5, 3),
    (1, 3, 4, 3),
    (5, 3, 2, 1, 2, 3),
    (7, 1, 3, 1),
    (4, 3, 2, 1, 2, 3),
)

BEB_CAPACITY_KWH = 200.0
BEB_E_MIN_FRACTION = 0.20
BEB_E_MAX_FRACTION = 0.95
BEB_KWH_PER_MILE = 2.0
BEBS_PER_ROUTE = 5

TOU_PRICES = {"off-peak": 0.08, "mid-peak": 0.12, "peak": 0.30}
DEMAND_RATE_USD_PER_KW = 15.0
DEMAND_INTERVAL_MINUTES = 15

V_MIN_PU = 0.90
V_MAX_PU = 1.05
# Ampacity margin over the worst-case apparent power a line can see
# (inflexible peak plus every downstream charger at full rating).
I_MAX_MARGIN = 1.4


@dataclass
class SynthParams:
    """Knobs the randomized variants perturb; defaults give the bundled case."""

    name: str = "parkcity33"
    load_scale: float = 1.0
    node_load_jitter: dict[int, float] = field(default_factory=dict)
    station_nodes: tuple[int, ...] = STATION_NODES
    station_chargers: tuple[int, ...] = STATION_CHARGERS
    road_miles: tuple[float, ...] = tuple(r[2] for r in ROADS)
    route_speed_mph: tuple[float, ...] = (12.0, 11.0, 12.0, 12.0, 11.0, 11.0, 12.0, 12.0, 11.0)
    dwell_offset: int = 0
    soc0_spread_kwh: float = 25.0
    consumption_kwh_per_mile: float = BEB_KWH_PER_MILE
    tou_prices: dict[str, float] = field(default_factory=lambda: dict(TOU_PRICES))
    lmp_base: float = 24.0
    lmp_midday_bump: float = 10.0
    lmp_evening_bump: float = 26.0
    v_min: float = V_MIN_PU


def _hour_gap(h: float, center: float) -> float:
    gap = abs(h - center)
    return min(gap, 24.0 - gap)


def _bump(h: float, center: float, width: float) -> float:
    return math.exp(-0.5 * (_hour_gap(h, center) / width) ** 2)


def _load_shape(h: float) -> float:
    """Diurnal demand multiplier: ~0.59 overnight, 1.0 near 19:00."""
    return 0.58 + 0.17 * _bump(h, 12.0, 3.5) + 0.42 * _bump(h, 19.0, 2.6)


def _lmp(h: float, p: SynthParams) -> float:
    return p.lmp_base + p.lmp_midday_bump * _bump(h, 12.0, 4.0) + p.lmp_evening_bump * _bump(h, 19.0, 2.2)


def _station_paths(road_miles: tuple[float, ...]) -> dict[tuple[int, int], float]:
    """Tree-path distance between every station pair."""
    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(1, len(STATION_NAMES) + 1)}
    for (a, b, _), miles in zip(ROADS, road_miles):
        adj[a].append((b, miles))
        adj[b].append((a, miles))
    dist: dict[tuple[int, int], float] = {}
    for start in adj:
        seen = {start: 0.0}
        frontier = [start]
        while frontier:
            u = frontier.pop()
            for v, miles in adj[u]:
                if v not in seen:
                    seen[v] = seen[u] + miles
                    frontier.append(v)
        for end, miles in seen.items():
            dist[(start, end)] = miles
    return dist


def _build_route(route_id: int, walk: tuple[int, ...], speed_mph: float,
                 dist: dict[tuple[int, int], float], grid: TimeGrid, dwell_offset: int) -> Route:
    stops: list[RouteStop] = []
    miles: list[float] = []
    t = 0
    visit = 0
    while True:
        station = walk[visit % len(walk)]
        dwell = 1 + (visit + route_id + dwell_offset) % 2
        depart = min(t + dwell, grid.num_steps - 1)
        stops.append(RouteStop(station, True, t, depart))
        nxt = walk[(visit + 1) % len(walk)]
        leg = dist[(station, nxt)]
        travel = max(1, round(leg / speed_mph * 60.0 / grid.step_minutes))
        if depart + travel > grid.num_steps - 1:
            break
        miles.append(leg)
        t = depart + travel
        visit += 1
    # Park at the final stop through the end of the horizon.
    last = stops[-1]
    stops[-1] = RouteStop(last.station_id, last.has_charger, last.arrive_step, grid.num_steps - 1)
    return Route(route_id, tuple(stops), tuple(miles))


def _i_max_limits(lines, node_p_nominal, node_q_nominal, stations, max_shape: float) -> list[float]:
    """Per-line ampacity: margin over worst-case downstream apparent power."""
    base_kw = BASE_MVA * 1000.0
    station_s_kw = {}
    for st in stations:
        s = st.capacity_kw() * math.sqrt(1.0 + CHARGER_Q_PER_P**2)
        station_s_kw[st.linked_node] = station_s_kw.get(st.linked_node, 0.0) + s

    parent = {}
    children: dict[int, list[int]] = {}
    order = [1]
    adj: dict[int, list[int]] = {}
    for ln in lines:
        adj.setdefault(ln.from_node, []).append(ln.to_node)
        adj.setdefault(ln.to_node, []).append(ln.from_node)
    seen = {1}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                children.setdefault(u, []).append(v)
                order.append(v)

    sub_p = {u: node_p_nominal.get(u, 0.0) for u in order}
    sub_q = {u: node_q_nominal.get(u, 0.0) for u in order}
    sub_st = {u: station_s_kw.get(u, 0.0) for u in order}
    for u in reversed(order[1:]):
        sub_p[parent[u]] += sub_p[u]
        sub_q[parent[u]] += sub_q[u]
        sub_st[parent[u]] += sub_st[u]

    limits = []
    for ln in lines:
        down = ln.to_node if parent.get(ln.to_node) == ln.from_node else ln.from_node
        s_inflex = math.hypot(sub_p[down] * max_shape, sub_q[down] * max_shape) / base_kw
        s_station = sub_st[down] / base_kw
        limits.append(max(0.05, I_MAX_MARGIN * (s_inflex + s_station)))
    return limits


def build_scenario(params: SynthParams | None = None) -> Scenario:
    p = params or SynthParams()
    grid = TimeGrid(start_clock_hour=5, step_minutes=5, num_steps=288)
    z_base = BASE_KV**2 / BASE_MVA

    hours = [(grid.clock_minutes(t)) / 60.0 for t in range(grid.num_steps)]
    shape = [_load_shape(h) for h in hours]
    max_shape = max(shape)

    node_p_nominal = {}
    node_q_nominal = {}
    nodes = []
    for nid in range(1, 34):
        pkw, qkvar = FEEDER33_LOADS_KW_KVAR.get(nid, (0.0, 0.0))
        jitter = p.node_load_jitter.get(nid, 1.0)
        pn = pkw * p.load_scale * jitter
        qn = qkvar * p.load_scale * jitter
        node_p_nominal[nid] = pn
        node_q_nominal[nid] = qn
        is_sub = nid == 1
        nodes.append(
            PowerNode(
                id=nid,
                is_substation=is_sub,
                inflexible_p_kw=tuple(0.0 if is_sub else pn * s for s in shape),
                inflexible_q_kvar=tuple(0.0 if is_sub else qn * s for s in shape),
                v_min=p.v_min,
                v_max=V_MAX_PU,
            )
        )

    stations = tuple(
        ChargingStation(
            id=k + 1,
            linked_node=p.station_nodes[k],
            charger_rating_kw=CHARGER_RATING_KW,
            n_chargers=p.station_chargers[k],
            layout_xy=STATION_XY[k],
        )
        for k in range(len(STATION_NAMES))
    )

    pre_lines = [PowerLine(f, t, r / z_base, x / z_base, 1.0) for f, t, r, x in FEEDER33_BRANCHES]
    limits = _i_max_limits(pre_lines, node_p_nominal, node_q_nominal, stations, max_shape)
    lines = tuple(
        PowerLine(ln.from_node, ln.to_node, ln.r_pu, ln.x_pu, i_max)
        for ln, i_max in zip(pre_lines, limits)
    )

    coupling = tuple(CouplingLink(st.id, st.linked_node) for st in stations)
    roads = tuple(
        Road(k + 1, (a, b), miles)
        for k, ((a, b, _), miles) in enumerate(zip(ROADS, p.road_miles))
    )

    dist = _station_paths(p.road_miles)
    routes = tuple(
        _build_route(rid + 1, walk, p.route_speed_mph[rid], dist, grid, p.dwell_offset)
        for rid, walk in enumerate(ROUTE_WALKS)
    )

    e_min = BEB_E_MIN_FRACTION * BEB_CAPACITY_KWH
    e_max = BEB_E_MAX_FRACTION * BEB_CAPACITY_KWH
    bebs = []
    for i in range(len(ROUTE_WALKS) * BEBS_PER_ROUTE):
        beb_id = i + 1
        route_id = i // BEBS_PER_ROUTE + 1
        soc0 = e_max - (i % BEBS_PER_ROUTE) * (p.soc0_spread_kwh / max(1, BEBS_PER_ROUTE - 1))
        bebs.append(
            Beb(
                id=beb_id,
                route_id=route_id,
                capacity_kwh=BEB_CAPACITY_KWH,
                e_min_kwh=e_min,
                e_max_kwh=e_max,
                soc0_kwh=soc0,
                consumption_kwh_per_mile=p.consumption_kwh_per_mile,
            )
        )

    periods = tuple(period_for_clock(grid.clock_minutes(t)) for t in range(grid.num_steps))
    tariff = Tariff(
        tou_usd_per_kwh=tuple(p.tou_prices[label] for label in periods),
        tou_period=periods,
        lmp_usd_per_mwh=tuple(_lmp(h, p) for h in hours),
        demand_rate_usd_per_kw=DEMAND_RATE_USD_PER_KW,
        demand_interval_minutes=DEMAND_INTERVAL_MINUTES,
    )

    return Scenario(
        name=p.name,
        grid=grid,
        base_kv=BASE_KV,
        base_mva=BASE_MVA,
        nodes=tuple(nodes),
        lines=lines,
        stations=stations,
        coupling_links=coupling,
        roads=roads,
        routes=routes,
        bebs=tuple(bebs),
        tariff=tariff,
    )


def build_parkcity_scenario() -> Scenario:
    """The bundled test case: 33 nodes, 32 lines, 7 stations, 6 roads,
    9 routes, 45 buses, 288 five-minute steps."""
    return build_scenario(SynthParams())


# Feeder nodes deep enough to be interesting but shallow enough that
# charging stays mostly uncurtailed; randomized variants sample from here.
_CANDIDATE_STATION_NODES = (3, 4, 5, 7, 8, 11, 12, 19, 21, 23, 24, 28, 30)


def random_scenario(seed: int, name: str | None = None) -> Scenario:
    """A seeded variant of the bundled case with perturbed loads, station
    placement, road lengths, timetable speeds, fleet state, and prices."""
    rng = random.Random(seed)
    jitter = {nid: rng.uniform(0.9, 1.1) for nid in range(2, 34)}
    station_nodes = tuple(rng.sample(_CANDIDATE_STATION_NODES, len(STATION_NAMES)))
    # Stations 1 and 3 are the route hubs; they keep extra chargers so the
    # fleet can always recover between the evening peak and the morning.
    chargers = tuple(
        rng.choice((3, 4)) if sid in (1, 3) else rng.choice((2, 3))
        for sid in range(1, len(STATION_NAMES) + 1)
    )
    params = SynthParams(
        name=name or f"parkcity33-r{seed}",
        load_scale=rng.uniform(0.75, 0.95),
        node_load_jitter=jitter,
        station_nodes=station_nodes,
        station_chargers=chargers,
        road_miles=tuple(
            min(4.2, max(3.0, base * rng.uniform(0.85, 1.15))) for _, _, base in ROADS
        ),
        route_speed_mph=tuple(rng.choice((10.0, 11.0)) for _ in ROUTE_WALKS),
        dwell_offset=rng.randrange(2),
        soc0_spread_kwh=rng.uniform(10.0, 30.0),
        consumption_kwh_per_mile=BEB_KWH_PER_MILE * rng.uniform(0.85, 1.0),
        tou_prices={
            "off-peak": rng.uniform(0.06, 0.09),
            "mid-peak": rng.uniform(0.10, 0.14),
            "peak": rng.uniform(0.26, 0.34),
        },
        lmp_base=rng.uniform(20.0, 28.0),
        lmp_midday_bump=rng.uniform(6.0, 14.0),
        lmp_evening_bump=rng.uniform(20.0, 32.0),
        v_min=0.89,
    )
    return build_scenario(params)
