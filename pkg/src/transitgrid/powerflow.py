"""Lossless linearized power flow on the radial feeder.

For every line (i -> j), with the tree rooted at the substation:

    p_flow(i->j) = sum of active load at j and every node below j
    q_flow(i->j) = same for reactive load
    v_sq[j]      = v_sq[i] - 2 * (r * p_flow + x * q_flow)
    i(i->j)      = sqrt(p_flow^2 + q_flow^2) / sqrt(v_sq[i])

All solver quantities are per-unit on the scenario bases; the substation
voltage is pinned to 1.0 pu. Losses are ignored, so substation export
equals total load exactly and flows are linear in the loads. The solver
is a pure function of (scenario, loads) and is safe to evaluate in
parallel across timesteps or candidate schedules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Scenario

UNDERVOLTAGE = "undervoltage"
OVERVOLTAGE = "overvoltage"
OVERCURRENT = "overcurrent"


class PowerFlowError(Exception):
    pass


class NonRadialError(PowerFlowError):
    """The line set is not a tree rooted at the substation."""


class ModelBreakdownError(PowerFlowError):
    """A computed squared voltage went non-positive; the linearization no
    longer describes the feeder, so the result is refused, not clamped."""


@dataclass(frozen=True)
class NodalLoad:
    """kW / kvar load per non-substation node id (missing ids mean zero)."""

    p_kw: dict[int, float]
    q_kvar: dict[int, float]


@dataclass(frozen=True)
class FlowSolution:
    v_sq: tuple[float, ...]        # per node, scenario node order
    p_flow_pu: tuple[float, ...]   # per line, scenario line order (sending end)
    q_flow_pu: tuple[float, ...]
    i_pu: tuple[float, ...]
    substation_p_pu: float
    substation_q_pu: float
    base_mva: float


@dataclass(frozen=True)
class Violation:
    component_type: str   # "node" | "line"
    component_id: int     # node id, or 1-based line index
    kind: str             # undervoltage | overvoltage | overcurrent
    value: float
    limit: float
    t: int


@dataclass(frozen=True)
class FeederTopology:
    """BFS orientation of the feeder tree away from the substation."""

    root: int
    order: tuple[int, ...]                 # node ids, parents before children
    parent: dict[int, int]
    parent_line: dict[int, int]            # node id -> 0-based scenario line index
    node_pos: dict[int, int]               # node id -> index into scenario.nodes


def feeder_topology(scenario: Scenario) -> FeederTopology:
    root = scenario.substation_id()
    node_pos = {n.id: k for k, n in enumerate(scenario.nodes)}
    adj: dict[int, list[tuple[int, int]]] = {n.id: [] for n in scenario.nodes}
    for idx, ln in enumerate(scenario.lines):
        if ln.from_node not in adj or ln.to_node not in adj:
            raise NonRadialError(f"line[{idx + 1}] references a node outside the scenario")
        adj[ln.from_node].append((ln.to_node, idx))
        adj[ln.to_node].append((ln.from_node, idx))

    parent: dict[int, int] = {}
    parent_line: dict[int, int] = {}
    order = [root]
    seen = {root}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, idx in adj[u]:
            if v in seen:
                if parent.get(u) != v:
                    raise NonRadialError(f"feeder contains a loop through line[{idx + 1}] ({u}-{v})")
                continue
            seen.add(v)
            parent[v] = u
            parent_line[v] = idx
            order.append(v)
    if len(order) != len(scenario.nodes):
        missing = sorted(set(node_pos) - seen)
        raise NonRadialError(f"nodes unreachable from the substation: {missing}")
    if len(scenario.lines) != len(scenario.nodes) - 1:
        raise NonRadialError(
            f"radial feeder needs {len(scenario.nodes) - 1} lines, got {len(scenario.lines)}"
        )
    return FeederTopology(root, tuple(order), parent, parent_line, node_pos)


def root_path_lines(scenario: Scenario) -> dict[int, frozenset[int]]:
    """For each node id, the set of 0-based line indices on its path to
    the substation. A load at node m flows on exactly these lines."""
    topo = feeder_topology(scenario)
    paths: dict[int, frozenset[int]] = {topo.root: frozenset()}
    for u in topo.order[1:]:
        paths[u] = paths[topo.parent[u]] | {topo.parent_line[u]}
    return paths


def solve_lindistflow(scenario: Scenario, loads: NodalLoad) -> FlowSolution:
    """Solve the linearized flow for one loading condition.

    Loads are given in kW/kvar and converted to per-unit on the scenario
    MVA base. Substation entries are rejected; its bus is the slack.
    """
    topo = feeder_topology(scenario)
    base_kw = scenario.base_mva * 1000.0
    if topo.root in loads.p_kw or topo.root in loads.q_kvar:
        raise PowerFlowError("loads must not include the substation node")

    p_acc = {u: loads.p_kw.get(u, 0.0) / base_kw for u in topo.order}
    q_acc = {u: loads.q_kvar.get(u, 0.0) / base_kw for u in topo.order}

    # Upward accumulation in fixed reverse-BFS order: when a node is
    # processed every descendant has already been folded into it, so each
    # accumulator is the exact downstream sum for the node's parent line.
    n_lines = len(scenario.lines)
    p_flow = [0.0] * n_lines
    q_flow = [0.0] * n_lines
    for u in reversed(topo.order[1:]):
        idx = topo.parent_line[u]
        p_flow[idx] = p_acc[u]
        q_flow[idx] = q_acc[u]
        parent = topo.parent[u]
        p_acc[parent] += p_acc[u]
        q_acc[parent] += q_acc[u]

    v_sq_by_id = {topo.root: 1.0}
    i_pu = [0.0] * n_lines
    for u in topo.order[1:]:
        idx = topo.parent_line[u]
        ln = scenario.lines[idx]
        v_up = v_sq_by_id[topo.parent[u]]
        v = v_up - 2.0 * (ln.r_pu * p_flow[idx] + ln.x_pu * q_flow[idx])
        if v <= 0.0:
            raise ModelBreakdownError(
                f"squared voltage at node {u} fell to {v:.6g}; "
                "loading is outside the model's validity range"
            )
        v_sq_by_id[u] = v
        i_pu[idx] = math.sqrt(p_flow[idx] ** 2 + q_flow[idx] ** 2) / math.sqrt(v_up)

    v_sq = tuple(v_sq_by_id[n.id] for n in scenario.nodes)
    return FlowSolution(
        v_sq=v_sq,
        p_flow_pu=tuple(p_flow),
        q_flow_pu=tuple(q_flow),
        i_pu=tuple(i_pu),
        substation_p_pu=p_acc[topo.root],
        substation_q_pu=q_acc[topo.root],
        base_mva=scenario.base_mva,
    )


def check_limits(sol: FlowSolution, scenario: Scenario, t: int) -> list[Violation]:
    """Voltage-band and ampacity check; an empty list means feasible."""
    out: list[Violation] = []
    for k, node in enumerate(scenario.nodes):
        v = math.sqrt(sol.v_sq[k])
        if v < node.v_min:
            out.append(Violation("node", node.id, UNDERVOLTAGE, v, node.v_min, t))
        elif v > node.v_max:
            out.append(Violation("node", node.id, OVERVOLTAGE, v, node.v_max, t))
    for k, ln in enumerate(scenario.lines):
        if sol.i_pu[k] > ln.i_max_pu:
            out.append(Violation("line", k + 1, OVERCURRENT, sol.i_pu[k], ln.i_max_pu, t))
    return out


def substation_power(sol: FlowSolution) -> tuple[float, float]:
    """Power leaving the substation in kW/kvar. Equals total system load
    under the lossless model."""
    base_kw = sol.base_mva * 1000.0
    return sol.substation_p_pu * base_kw, sol.substation_q_pu * base_kw


def inject_station_loads(
    scenario: Scenario,
    t: int,
    station_p_kw,
    station_q_kvar,
) -> NodalLoad:
    """Inflexible load at step t plus station charging injected at the
    coupled nodes. Station sequences follow scenario.stations order."""
    root = scenario.substation_id()
    p = {n.id: n.inflexible_p_kw[t] for n in scenario.nodes if n.id != root}
    q = {n.id: n.inflexible_q_kvar[t] for n in scenario.nodes if n.id != root}
    for station, pkw, qkvar in zip(scenario.stations, station_p_kw, station_q_kvar):
        node = station.linked_node
        p[node] = p.get(node, 0.0) + pkw
        q[node] = q.get(node, 0.0) + qkvar
    return NodalLoad(p, q)
