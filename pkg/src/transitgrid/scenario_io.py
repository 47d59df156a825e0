"""Scenario file format: one versioned JSON document per scenario.

The on-disk schema is documented in docs/scenario-format.md. Numeric
series are written with Python's shortest round-trip float text, so a
load/write cycle reproduces every value bit for bit. The document also
declares its own component counts; the loader cross-checks them so a
truncated or hand-edited file is rejected instead of silently loaded.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .model import (
    Beb,
    ChargingStation,
    CouplingLink,
    Finding,
    PowerLine,
    PowerNode,
    Road,
    Route,
    RouteStop,
    Scenario,
    ScenarioValidationError,
    Tariff,
    TimeGrid,
    ValidationReport,
    validate_scenario,
)

SCENARIO_FORMAT = "transitgrid-scenario"
SCENARIO_FORMAT_VERSION = 1


class ScenarioFormatError(ValueError):
    """The file is not a well-formed scenario document."""


def scenario_to_doc(s: Scenario) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "format_version": SCENARIO_FORMAT_VERSION,
        "name": s.name,
        "counts": s.counts(),
        "time_grid": {
            "start_clock_hour": s.grid.start_clock_hour,
            "step_minutes": s.grid.step_minutes,
            "num_steps": s.grid.num_steps,
        },
        "per_unit_bases": {"kv": s.base_kv, "mva": s.base_mva},
        "nodes": [
            {
                "id": n.id,
                "is_substation": n.is_substation,
                "v_min_pu": n.v_min,
                "v_max_pu": n.v_max,
                "angle_deg": n.angle_deg,
                "inflexible_p_kw": list(n.inflexible_p_kw),
                "inflexible_q_kvar": list(n.inflexible_q_kvar),
            }
            for n in s.nodes
        ],
        "lines": [
            {
                "from_node": ln.from_node,
                "to_node": ln.to_node,
                "r_pu": ln.r_pu,
                "x_pu": ln.x_pu,
                "i_max_pu": ln.i_max_pu,
            }
            for ln in s.lines
        ],
        "stations": [
            {
                "id": st.id,
                "linked_node": st.linked_node,
                "charger_rating_kw": st.charger_rating_kw,
                "n_chargers": st.n_chargers,
                "layout_xy": list(st.layout_xy),
            }
            for st in s.stations
        ],
        "coupling_links": [
            {"station_id": cl.station_id, "node_id": cl.node_id} for cl in s.coupling_links
        ],
        "roads": [
            {"id": r.id, "endpoints": list(r.endpoints), "length_miles": r.length_miles}
            for r in s.roads
        ],
        "routes": [
            {
                "id": r.id,
                "stops": [
                    {
                        "station_id": stop.station_id,
                        "has_charger": stop.has_charger,
                        "arrive_step": stop.arrive_step,
                        "depart_step": stop.depart_step,
                    }
                    for stop in r.stops
                ],
                "segment_miles": list(r.segment_miles),
            }
            for r in s.routes
        ],
        "bebs": [
            {
                "id": b.id,
                "route_id": b.route_id,
                "capacity_kwh": b.capacity_kwh,
                "e_min_kwh": b.e_min_kwh,
                "e_max_kwh": b.e_max_kwh,
                "soc0_kwh": b.soc0_kwh,
                "consumption_kwh_per_mile": b.consumption_kwh_per_mile,
            }
            for b in s.bebs
        ],
        "tariff": {
            "tou_usd_per_kwh": list(s.tariff.tou_usd_per_kwh),
            "tou_period": list(s.tariff.tou_period),
            "lmp_usd_per_mwh": list(s.tariff.lmp_usd_per_mwh),
            "demand_rate_usd_per_kw": s.tariff.demand_rate_usd_per_kw,
            "demand_interval_minutes": s.tariff.demand_interval_minutes,
        },
    }


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_fingerprint(s: Scenario) -> str:
    """Content hash of the canonical scenario serialization."""
    return hashlib.sha256(canonical_json(scenario_to_doc(s)).encode()).hexdigest()


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _series(value, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ScenarioFormatError(f"{path}: expected a list of numbers")
    return tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(value))


def _get(obj, key: str, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioFormatError(f"{path}: missing required key {key!r}")
    return obj[key]


def doc_to_scenario(doc) -> Scenario:
    """Build the in-memory scenario from a parsed document. Structural
    problems raise ScenarioFormatError; invariants are checked separately."""
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level must be a JSON object")
    if doc.get("format") != SCENARIO_FORMAT:
        raise ScenarioFormatError(f"not a scenario document (format={doc.get('format')!r})")
    version = doc.get("format_version")
    if version != SCENARIO_FORMAT_VERSION:
        raise ScenarioFormatError(
            f"unsupported scenario format_version {version!r}, expected {SCENARIO_FORMAT_VERSION}"
        )

    tg = _get(doc, "time_grid", "time_grid")
    grid = TimeGrid(
        start_clock_hour=int(_num(_get(tg, "start_clock_hour", "time_grid"), "start_clock_hour")),
        step_minutes=int(_num(_get(tg, "step_minutes", "time_grid"), "step_minutes")),
        num_steps=int(_num(_get(tg, "num_steps", "time_grid"), "num_steps")),
    )
    bases = _get(doc, "per_unit_bases", "per_unit_bases")

    nodes = []
    for i, nd in enumerate(_get(doc, "nodes", "nodes")):
        path = f"nodes[{i}]"
        angle = nd.get("angle_deg") if isinstance(nd, dict) else None
        nodes.append(
            PowerNode(
                id=int(_num(_get(nd, "id", path), f"{path}.id")),
                is_substation=bool(_get(nd, "is_substation", path)),
                inflexible_p_kw=_series(_get(nd, "inflexible_p_kw", path), f"{path}.inflexible_p_kw"),
                inflexible_q_kvar=_series(_get(nd, "inflexible_q_kvar", path), f"{path}.inflexible_q_kvar"),
                v_min=_num(_get(nd, "v_min_pu", path), f"{path}.v_min_pu"),
                v_max=_num(_get(nd, "v_max_pu", path), f"{path}.v_max_pu"),
                angle_deg=None if angle is None else _num(angle, f"{path}.angle_deg"),
            )
        )

    lines = []
    for i, ln in enumerate(_get(doc, "lines", "lines")):
        path = f"lines[{i}]"
        lines.append(
            PowerLine(
                from_node=int(_num(_get(ln, "from_node", path), f"{path}.from_node")),
                to_node=int(_num(_get(ln, "to_node", path), f"{path}.to_node")),
                r_pu=_num(_get(ln, "r_pu", path), f"{path}.r_pu"),
                x_pu=_num(_get(ln, "x_pu", path), f"{path}.x_pu"),
                i_max_pu=_num(_get(ln, "i_max_pu", path), f"{path}.i_max_pu"),
            )
        )

    stations = []
    for i, st in enumerate(_get(doc, "stations", "stations")):
        path = f"stations[{i}]"
        xy = _get(st, "layout_xy", path)
        if not isinstance(xy, list) or len(xy) != 2:
            raise ScenarioFormatError(f"{path}.layout_xy: expected [x, y]")
        stations.append(
            ChargingStation(
                id=int(_num(_get(st, "id", path), f"{path}.id")),
                linked_node=int(_num(_get(st, "linked_node", path), f"{path}.linked_node")),
                charger_rating_kw=_num(_get(st, "charger_rating_kw", path), f"{path}.charger_rating_kw"),
                n_chargers=int(_num(_get(st, "n_chargers", path), f"{path}.n_chargers")),
                layout_xy=(_num(xy[0], f"{path}.layout_xy[0]"), _num(xy[1], f"{path}.layout_xy[1]")),
            )
        )

    coupling = []
    for i, cl in enumerate(_get(doc, "coupling_links", "coupling_links")):
        path = f"coupling_links[{i}]"
        coupling.append(
            CouplingLink(
                station_id=int(_num(_get(cl, "station_id", path), f"{path}.station_id")),
                node_id=int(_num(_get(cl, "node_id", path), f"{path}.node_id")),
            )
        )

    roads = []
    for i, rd in enumerate(_get(doc, "roads", "roads")):
        path = f"roads[{i}]"
        ends = _get(rd, "endpoints", path)
        if not isinstance(ends, list) or len(ends) != 2:
            raise ScenarioFormatError(f"{path}.endpoints: expected [station, station]")
        roads.append(
            Road(
                id=int(_num(_get(rd, "id", path), f"{path}.id")),
                endpoints=(int(_num(ends[0], path)), int(_num(ends[1], path))),
                length_miles=_num(_get(rd, "length_miles", path), f"{path}.length_miles"),
            )
        )

    routes = []
    for i, rt in enumerate(_get(doc, "routes", "routes")):
        path = f"routes[{i}]"
        stops = []
        for j, stop in enumerate(_get(rt, "stops", path)):
            spath = f"{path}.stops[{j}]"
            stops.append(
                RouteStop(
                    station_id=int(_num(_get(stop, "station_id", spath), f"{spath}.station_id")),
                    has_charger=bool(_get(stop, "has_charger", spath)),
                    arrive_step=int(_num(_get(stop, "arrive_step", spath), f"{spath}.arrive_step")),
                    depart_step=int(_num(_get(stop, "depart_step", spath), f"{spath}.depart_step")),
                )
            )
        routes.append(
            Route(
                id=int(_num(_get(rt, "id", path), f"{path}.id")),
                stops=tuple(stops),
                segment_miles=_series(_get(rt, "segment_miles", path), f"{path}.segment_miles"),
            )
        )

    bebs = []
    for i, b in enumerate(_get(doc, "bebs", "bebs")):
        path = f"bebs[{i}]"
        bebs.append(
            Beb(
                id=int(_num(_get(b, "id", path), f"{path}.id")),
                route_id=int(_num(_get(b, "route_id", path), f"{path}.route_id")),
                capacity_kwh=_num(_get(b, "capacity_kwh", path), f"{path}.capacity_kwh"),
                e_min_kwh=_num(_get(b, "e_min_kwh", path), f"{path}.e_min_kwh"),
                e_max_kwh=_num(_get(b, "e_max_kwh", path), f"{path}.e_max_kwh"),
                soc0_kwh=_num(_get(b, "soc0_kwh", path), f"{path}.soc0_kwh"),
                consumption_kwh_per_mile=_num(
                    _get(b, "consumption_kwh_per_mile", path), f"{path}.consumption_kwh_per_mile"
                ),
            )
        )

    tr = _get(doc, "tariff", "tariff")
    periods = _get(tr, "tou_period", "tariff")
    if not isinstance(periods, list) or not all(isinstance(p, str) for p in periods):
        raise ScenarioFormatError("tariff.tou_period: expected a list of strings")
    tariff = Tariff(
        tou_usd_per_kwh=_series(_get(tr, "tou_usd_per_kwh", "tariff"), "tariff.tou_usd_per_kwh"),
        tou_period=tuple(periods),
        lmp_usd_per_mwh=_series(_get(tr, "lmp_usd_per_mwh", "tariff"), "tariff.lmp_usd_per_mwh"),
        demand_rate_usd_per_kw=_num(
            _get(tr, "demand_rate_usd_per_kw", "tariff"), "tariff.demand_rate_usd_per_kw"
        ),
        demand_interval_minutes=int(
            _num(_get(tr, "demand_interval_minutes", "tariff"), "tariff.demand_interval_minutes")
        ),
    )

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioFormatError("name: expected a non-empty string")

    return Scenario(
        name=name,
        grid=grid,
        base_kv=_num(_get(bases, "kv", "per_unit_bases"), "per_unit_bases.kv"),
        base_mva=_num(_get(bases, "mva", "per_unit_bases"), "per_unit_bases.mva"),
        nodes=tuple(nodes),
        lines=tuple(lines),
        stations=tuple(stations),
        coupling_links=tuple(coupling),
        roads=tuple(roads),
        routes=tuple(routes),
        bebs=tuple(bebs),
        tariff=tariff,
    )


def _check_declared_counts(doc, s: Scenario) -> list[Finding]:
    declared = doc.get("counts")
    if not isinstance(declared, dict):
        return [Finding("counts", "missing or malformed counts block")]
    out = []
    actual = s.counts()
    for key, value in actual.items():
        if key not in declared:
            out.append(Finding("counts", f"missing declared count for {key!r}"))
        elif declared[key] != value:
            out.append(Finding(f"counts.{key}", f"declares {declared[key]}, document contains {value}"))
    for key in declared:
        if key not in actual:
            out.append(Finding("counts", f"unknown declared count {key!r}"))
    return out


def load_scenario(path) -> Scenario:
    """Load, build, and fully validate a scenario file.

    Raises ScenarioFormatError for malformed documents and
    ScenarioValidationError (with every finding) for broken invariants,
    including declared-count mismatches and dangling references. Nothing
    is repaired.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: not valid JSON: {exc}") from exc
    scenario = doc_to_scenario(doc)
    findings = _check_declared_counts(doc, scenario)
    report = validate_scenario(scenario)
    findings.extend(report.findings)
    if findings:
        raise ScenarioValidationError(ValidationReport(tuple(findings)))
    return scenario


def write_scenario(s: Scenario, path) -> None:
    """Write the scenario document; load_scenario reads it back exactly."""
    doc = scenario_to_doc(s)
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")
