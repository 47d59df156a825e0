"""Hand-buildable scenarios and independent oracles shared across tests."""
from __future__ import annotations

import random

from transitgrid.model import (
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
from transitgrid.powerflow import Violation
from transitgrid.store import Snapshot

HOURLY_GRID = TimeGrid(start_clock_hour=5, step_minutes=60, num_steps=24)
FIVE_MIN_GRID = TimeGrid(start_clock_hour=5, step_minutes=5, num_steps=288)

TOU_PRICES = {"off-peak": 0.08, "mid-peak": 0.12, "peak": 0.30}


def make_tariff(grid: TimeGrid = HOURLY_GRID, lmp: float = 30.0,
                demand_interval: int = 60, prices: dict | None = None) -> Tariff:
    prices = prices or TOU_PRICES
    periods = tuple(period_for_clock(grid.clock_minutes(t)) for t in range(grid.num_steps))
    return Tariff(
        tou_usd_per_kwh=tuple(prices[p] for p in periods),
        tou_period=periods,
        lmp_usd_per_mwh=(lmp,) * grid.num_steps,
        demand_rate_usd_per_kw=15.0,
        demand_interval_minutes=demand_interval,
    )


def zeros(n: int = 24) -> tuple[float, ...]:
    return (0.0,) * n


def chain_scenario(
    r: float = 0.01,
    x: float = 0.01,
    base_mva: float = 100.0,
    v_min: float = 0.95,
    v_max: float = 1.05,
    i_max: tuple[float, float] = (10.0, 10.0),
) -> Scenario:
    """Three-node chain 1-2-3 with no transit layer."""
    nodes = tuple(
        PowerNode(i, i == 1, zeros(), zeros(), v_min, v_max) for i in (1, 2, 3)
    )
    lines = (
        PowerLine(1, 2, r, x, i_max[0]),
        PowerLine(2, 3, r, x, i_max[1]),
    )
    return Scenario(
        name="chain3",
        grid=HOURLY_GRID,
        base_kv=12.66,
        base_mva=base_mva,
        nodes=nodes,
        lines=lines,
        stations=(),
        coupling_links=(),
        roads=(),
        routes=(),
        bebs=(),
        tariff=make_tariff(),
    )


def shuttle_route(route_id: int = 1, num_steps: int = 24, miles: float = 6.0,
                  travel_steps: int = 2) -> Route:
    """Two-station shuttle: dwell one step, then drive `travel_steps`."""
    stops = []
    segs = []
    k = 0
    cycle = 1 + travel_steps
    while k * cycle < num_steps:
        station = 1 if k % 2 == 0 else 2
        arrive = k * cycle
        depart = min(arrive + 1, num_steps - 1)
        stops.append(RouteStop(station, True, arrive, depart))
        if (k + 1) * cycle < num_steps:
            segs.append(miles)
        k += 1
    last = stops[-1]
    stops[-1] = RouteStop(last.station_id, True, last.arrive_step, num_steps - 1)
    return Route(route_id, tuple(stops), tuple(segs))


def tiny_scenario(
    soc0: tuple[float, ...] = (150.0, 120.0),
    inflex_kw: float = 100.0,
    v_min: float = 0.9,
    chargers: int = 1,
    grid: TimeGrid = HOURLY_GRID,
) -> Scenario:
    """Two stations on a 3-node feeder, one shuttle route."""
    n = grid.num_steps
    load = (inflex_kw,) * n
    loadq = (inflex_kw * 0.4,) * n
    nodes = (
        PowerNode(1, True, zeros(n), zeros(n), v_min, 1.1),
        PowerNode(2, False, load, loadq, v_min, 1.1),
        PowerNode(3, False, load, loadq, v_min, 1.1),
    )
    lines = (
        PowerLine(1, 2, 0.001, 0.001, 5.0),
        PowerLine(2, 3, 0.001, 0.001, 5.0),
    )
    stations = (
        ChargingStation(1, 2, 500.0, chargers, (0.0, 0.0)),
        ChargingStation(2, 3, 500.0, chargers, (6.0, 0.0)),
    )
    coupling = (CouplingLink(1, 2), CouplingLink(2, 3))
    roads = (Road(1, (1, 2), 6.0),)
    routes = (shuttle_route(num_steps=n),)
    bebs = tuple(
        Beb(i + 1, 1, 200.0, 40.0, 190.0, s, 2.0) for i, s in enumerate(soc0)
    )
    return Scenario(
        name="tiny",
        grid=grid,
        base_kv=12.66,
        base_mva=10.0,
        nodes=nodes,
        lines=lines,
        stations=stations,
        coupling_links=coupling,
        roads=roads,
        routes=routes,
        bebs=bebs,
        tariff=make_tariff(grid),
    )


# Load and impedance draws for random trees; sized so the linearized
# voltage stays comfortably positive on any sampled topology.
TREE_P_MAX_KW = 400.0
TREE_Q_MAX_KVAR = 200.0


def random_tree_loads(rng: random.Random, n_nodes: int):
    p = {i: rng.uniform(0.0, TREE_P_MAX_KW) for i in range(2, n_nodes + 1)}
    q = {i: rng.uniform(0.0, TREE_Q_MAX_KVAR) for i in range(2, n_nodes + 1)}
    return p, q


def random_tree_scenario(rng: random.Random, n_nodes: int, base_mva: float = 10.0) -> Scenario:
    """Random radial feeder with shuffled, randomly oriented line records."""
    lines = []
    for nid in range(2, n_nodes + 1):
        parent = rng.randint(1, nid - 1)
        a, b = (parent, nid) if rng.random() < 0.5 else (nid, parent)
        lines.append(PowerLine(a, b, rng.uniform(0.0005, 0.008), rng.uniform(0.0005, 0.008), 10.0))
    rng.shuffle(lines)
    nodes = tuple(
        PowerNode(i, i == 1, zeros(), zeros(), 0.5, 1.5) for i in range(1, n_nodes + 1)
    )
    return Scenario(
        name=f"tree{n_nodes}",
        grid=HOURLY_GRID,
        base_kv=12.66,
        base_mva=base_mva,
        nodes=nodes,
        lines=tuple(lines),
        stations=(),
        coupling_links=(),
        roads=(),
        routes=(),
        bebs=(),
        tariff=make_tariff(),
    )


def brute_force_flows(scenario: Scenario, p_kw: dict[int, float], q_kvar: dict[int, float]):
    """Independent per-line downstream sums: cut each line and collect the
    component not containing the substation by plain reachability."""
    base_kw = scenario.base_mva * 1000.0
    adj: dict[int, list[int]] = {nd.id: [] for nd in scenario.nodes}
    for ln in scenario.lines:
        adj[ln.from_node].append(ln.to_node)
        adj[ln.to_node].append(ln.from_node)

    p_flows, q_flows, down_ends = [], [], []
    for cut in scenario.lines:
        reach = {1}
        frontier = [1]
        while frontier:
            u = frontier.pop()
            for v in adj[u]:
                if {u, v} == {cut.from_node, cut.to_node}:
                    continue
                if v not in reach:
                    reach.add(v)
                    frontier.append(v)
        downstream = [nd.id for nd in scenario.nodes if nd.id not in reach]
        down_ends.append(cut.from_node if cut.from_node not in reach else cut.to_node)
        p_flows.append(sum(p_kw.get(i, 0.0) for i in downstream) / base_kw)
        q_flows.append(sum(q_kvar.get(i, 0.0) for i in downstream) / base_kw)
    return p_flows, q_flows, down_ends


def brute_force_voltages(scenario: Scenario, p_flows, q_flows, down_ends):
    """Voltage recursion applied independently, walking lines repeatedly
    until every node is assigned (no topology ordering assumed)."""
    v_sq = {1: 1.0}
    pending = list(zip(scenario.lines, p_flows, q_flows, down_ends))
    while pending:
        rest = []
        for ln, p, q, down in pending:
            up = ln.from_node if down == ln.to_node else ln.to_node
            if up in v_sq:
                v_sq[down] = v_sq[up] - 2.0 * (ln.r_pu * p + ln.x_pu * q)
            else:
                rest.append((ln, p, q, down))
        if len(rest) == len(pending):
            raise AssertionError("oracle could not orient the tree")
        pending = rest
    return v_sq


def make_snapshot(
    t: int,
    station_p_kw: tuple[float, ...] = (),
    substation_kw: float = 0.0,
    tou_period: str = "mid-peak",
    violations: tuple[Violation, ...] = (),
) -> Snapshot:
    """Minimal snapshot for cost-accounting tests."""
    n = len(station_p_kw)
    return Snapshot(
        t=t,
        node_v_pu=(1.0,),
        node_p_load_kw=(0.0,),
        node_q_load_kvar=(0.0,),
        line_p_kw=(),
        line_q_kvar=(),
        line_i_pu=(),
        substation_kw=substation_kw,
        substation_kvar=0.0,
        station_p_kw=station_p_kw,
        station_q_kvar=(0.0,) * n,
        station_n_bebs=(0,) * n,
        bebs=(),
        tou_usd_per_kwh=0.0,
        tou_period=tou_period,
        lmp_usd_per_mwh=0.0,
        violations=violations,
        emergency_beb_ids=frozenset(),
        infeasible_at_zero=False,
    )
