"""Snapshot stream: the complete observable system state per step, with
query access and a versioned on-disk run format (docs/run-format.md).

Streams are write-once (produced by the horizon loop) and immutable
afterwards; queries never mutate. Exports are deterministic, so identical
streams serialize to identical bytes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .model import Scenario
from .powerflow import FlowSolution, Violation
from .scenario_io import (
    canonical_json,
    doc_to_scenario,
    scenario_fingerprint,
    scenario_to_doc,
)
from .transit import AtStation, BebState, FleetState, Location, OnRoad

RUN_FORMAT = "transitgrid-run"
RUN_FORMAT_VERSION = 1

# Queryable per-step series by component kind. Component ids look like
# "node-5", "line-3", "station-2", "beb-12"; the bare "price" component
# has no id.
SERIES_FIELDS = {
    "node": ("v_pu", "p_load_kw", "q_load_kvar"),
    "line": ("p_kw", "q_kvar", "i_pu"),
    "station": ("p_kw", "q_kvar", "n_bebs_present"),
    "beb": ("soc_kwh", "velocity_mph", "charging_kw", "charge_kwh", "discharge_kwh"),
    "price": ("tou_usd_per_kwh", "lmp_usd_per_mwh"),
}

SERIES_UNITS = {
    "v_pu": "pu",
    "p_load_kw": "kW",
    "q_load_kvar": "kvar",
    "p_kw": "kW",
    "q_kvar": "kvar",
    "i_pu": "pu",
    "n_bebs_present": "count",
    "soc_kwh": "kWh",
    "velocity_mph": "mph",
    "charging_kw": "kW",
    "charge_kwh": "kWh",
    "discharge_kwh": "kWh",
    "tou_usd_per_kwh": "USD/kWh",
    "lmp_usd_per_mwh": "USD/MWh",
}


class RunFormatError(ValueError):
    """The file is not a well-formed run export."""


class RunVersionError(RunFormatError):
    pass


class FingerprintMismatchError(RunFormatError):
    """Stored content does not match its recorded hash."""


class UnknownComponentError(LookupError):
    pass


class UnknownFieldError(LookupError):
    pass


@dataclass(frozen=True)
class Snapshot:
    t: int
    node_v_pu: tuple[float, ...]
    node_p_load_kw: tuple[float, ...]
    node_q_load_kvar: tuple[float, ...]
    line_p_kw: tuple[float, ...]
    line_q_kvar: tuple[float, ...]
    line_i_pu: tuple[float, ...]
    substation_kw: float
    substation_kvar: float
    station_p_kw: tuple[float, ...]
    station_q_kvar: tuple[float, ...]
    station_n_bebs: tuple[int, ...]
    bebs: tuple[BebState, ...]
    tou_usd_per_kwh: float
    tou_period: str
    lmp_usd_per_mwh: float
    violations: tuple[Violation, ...]
    emergency_beb_ids: frozenset[int]
    infeasible_at_zero: bool


@dataclass(frozen=True)
class SnapshotStream:
    scenario_fingerprint: str
    snapshots: tuple[Snapshot, ...]


def build_snapshot(
    scenario: Scenario,
    t: int,
    settled: FleetState,
    sol: FlowSolution,
    violations,
    outcome,
    station_p,
    station_q,
    substation_kw: float,
    substation_kvar: float,
) -> Snapshot:
    base_kw = scenario.base_mva * 1000.0
    station_pos = {st.id: k for k, st in enumerate(scenario.stations)}
    n_bebs = [0] * len(scenario.stations)
    for state in settled.bebs:
        if isinstance(state.location, AtStation):
            n_bebs[station_pos[state.location.station_id]] += 1

    root = scenario.substation_id()
    node_p = []
    node_q = []
    station_at_node = {st.linked_node: k for k, st in enumerate(scenario.stations)}
    for node in scenario.nodes:
        p = 0.0 if node.id == root else node.inflexible_p_kw[t]
        q = 0.0 if node.id == root else node.inflexible_q_kvar[t]
        k = station_at_node.get(node.id)
        if k is not None:
            p += station_p[k]
            q += station_q[k]
        node_p.append(p)
        node_q.append(q)

    return Snapshot(
        t=t,
        node_v_pu=tuple(v**0.5 for v in sol.v_sq),
        node_p_load_kw=tuple(node_p),
        node_q_load_kvar=tuple(node_q),
        line_p_kw=tuple(p * base_kw for p in sol.p_flow_pu),
        line_q_kvar=tuple(q * base_kw for q in sol.q_flow_pu),
        line_i_pu=tuple(sol.i_pu),
        substation_kw=substation_kw,
        substation_kvar=substation_kvar,
        station_p_kw=tuple(station_p),
        station_q_kvar=tuple(station_q),
        station_n_bebs=tuple(n_bebs),
        bebs=settled.bebs,
        tou_usd_per_kwh=scenario.tariff.tou_usd_per_kwh[t],
        tou_period=scenario.tariff.tou_period[t],
        lmp_usd_per_mwh=scenario.tariff.lmp_usd_per_mwh[t],
        violations=tuple(violations),
        emergency_beb_ids=frozenset(outcome.emergency_beb_ids),
        infeasible_at_zero=outcome.infeasible_at_zero,
    )


def snapshot_at(stream: SnapshotStream, t: int) -> Snapshot:
    """Exact stored snapshot for step t; no interpolation."""
    n = len(stream.snapshots)
    if not 0 <= t < n:
        raise IndexError(f"step {t} outside stored horizon [0, {n})")
    return stream.snapshots[t]


def _component_key(component: str) -> tuple[str, int | None]:
    if component == "price":
        return "price", None
    kind, sep, raw = component.rpartition("-")
    if sep and kind in SERIES_FIELDS and raw.isdigit():
        return kind, int(raw)
    raise UnknownComponentError(
        f"unknown component {component!r}; expected 'price' or one of "
        + ", ".join(f"'{k}-<id>'" for k in SERIES_FIELDS if k != "price")
    )


def series(stream: SnapshotStream, component: str, field: str) -> list[float]:
    """Ordered per-step values of one component field across the horizon.

    Component ids are 1-based and follow scenario order ("node-5",
    "line-3", "station-2", "beb-12", or "price")."""
    kind, cid = _component_key(component)
    valid = SERIES_FIELDS[kind]
    if field not in valid:
        raise UnknownFieldError(f"unknown field {field!r} for {kind}; valid fields: {', '.join(valid)}")
    first = stream.snapshots[0]
    sizes = {
        "node": len(first.node_v_pu),
        "line": len(first.line_p_kw),
        "station": len(first.station_p_kw),
        "beb": len(first.bebs),
        "price": 1,
    }
    if kind != "price" and not 1 <= cid <= sizes[kind]:
        raise UnknownComponentError(f"no {kind} with id {cid}; valid ids: 1..{sizes[kind]}")

    def value(snap: Snapshot) -> float:
        if kind == "node":
            return {
                "v_pu": snap.node_v_pu,
                "p_load_kw": snap.node_p_load_kw,
                "q_load_kvar": snap.node_q_load_kvar,
            }[field][cid - 1]
        if kind == "line":
            return {"p_kw": snap.line_p_kw, "q_kvar": snap.line_q_kvar, "i_pu": snap.line_i_pu}[field][cid - 1]
        if kind == "station":
            return {
                "p_kw": snap.station_p_kw,
                "q_kvar": snap.station_q_kvar,
                "n_bebs_present": snap.station_n_bebs,
            }[field][cid - 1]
        if kind == "beb":
            return getattr(snap.bebs[cid - 1], field)
        return snap.tou_usd_per_kwh if field == "tou_usd_per_kwh" else snap.lmp_usd_per_mwh

    return [value(snap) for snap in stream.snapshots]


def _location_to_doc(loc: Location) -> dict:
    if isinstance(loc, AtStation):
        return {"kind": "at_station", "station_id": loc.station_id}
    return {"kind": "on_road", "route_segment": loc.route_segment, "fraction": loc.fraction}


def _location_from_doc(doc) -> Location:
    kind = doc.get("kind")
    if kind == "at_station":
        return AtStation(int(doc["station_id"]))
    if kind == "on_road":
        return OnRoad(int(doc["route_segment"]), float(doc["fraction"]))
    raise RunFormatError(f"unknown location kind {kind!r}")


def snapshot_to_doc(snap: Snapshot) -> dict:
    return {
        "t": snap.t,
        "node_v_pu": list(snap.node_v_pu),
        "node_p_load_kw": list(snap.node_p_load_kw),
        "node_q_load_kvar": list(snap.node_q_load_kvar),
        "line_p_kw": list(snap.line_p_kw),
        "line_q_kvar": list(snap.line_q_kvar),
        "line_i_pu": list(snap.line_i_pu),
        "substation_kw": snap.substation_kw,
        "substation_kvar": snap.substation_kvar,
        "station_p_kw": list(snap.station_p_kw),
        "station_q_kvar": list(snap.station_q_kvar),
        "station_n_bebs": list(snap.station_n_bebs),
        "bebs": [
            {
                "id": b.beb_id,
                "soc_kwh": b.soc_kwh,
                "location": _location_to_doc(b.location),
                "velocity_mph": b.velocity_mph,
                "charging_kw": b.charging_kw,
                "charge_kwh": b.charge_kwh,
                "discharge_kwh": b.discharge_kwh,
                "last_station": b.last_station,
                "next_station": b.next_station,
                "emergency": b.beb_id in snap.emergency_beb_ids,
                "below_min": b.below_min,
            }
            for b in snap.bebs
        ],
        "prices": {
            "tou_usd_per_kwh": snap.tou_usd_per_kwh,
            "tou_period": snap.tou_period,
            "lmp_usd_per_mwh": snap.lmp_usd_per_mwh,
        },
        "violations": [
            {
                "component_type": v.component_type,
                "component_id": v.component_id,
                "kind": v.kind,
                "value": v.value,
                "limit": v.limit,
                "t": v.t,
            }
            for v in snap.violations
        ],
        "infeasible_at_zero": snap.infeasible_at_zero,
    }


def doc_to_snapshot(doc) -> Snapshot:
    try:
        bebs = []
        emergencies = set()
        for b in doc["bebs"]:
            if b["emergency"]:
                emergencies.add(int(b["id"]))
            bebs.append(
                BebState(
                    beb_id=int(b["id"]),
                    soc_kwh=float(b["soc_kwh"]),
                    location=_location_from_doc(b["location"]),
                    velocity_mph=float(b["velocity_mph"]),
                    last_station=int(b["last_station"]),
                    next_station=int(b["next_station"]),
                    charging_kw=float(b["charging_kw"]),
                    charge_kwh=float(b["charge_kwh"]),
                    discharge_kwh=float(b["discharge_kwh"]),
                    below_min=bool(b["below_min"]),
                )
            )
        violations = tuple(
            Violation(
                component_type=v["component_type"],
                component_id=int(v["component_id"]),
                kind=v["kind"],
                value=float(v["value"]),
                limit=float(v["limit"]),
                t=int(v["t"]),
            )
            for v in doc["violations"]
        )
        prices = doc["prices"]
        return Snapshot(
            t=int(doc["t"]),
            node_v_pu=tuple(float(x) for x in doc["node_v_pu"]),
            node_p_load_kw=tuple(float(x) for x in doc["node_p_load_kw"]),
            node_q_load_kvar=tuple(float(x) for x in doc["node_q_load_kvar"]),
            line_p_kw=tuple(float(x) for x in doc["line_p_kw"]),
            line_q_kvar=tuple(float(x) for x in doc["line_q_kvar"]),
            line_i_pu=tuple(float(x) for x in doc["line_i_pu"]),
            substation_kw=float(doc["substation_kw"]),
            substation_kvar=float(doc["substation_kvar"]),
            station_p_kw=tuple(float(x) for x in doc["station_p_kw"]),
            station_q_kvar=tuple(float(x) for x in doc["station_q_kvar"]),
            station_n_bebs=tuple(int(x) for x in doc["station_n_bebs"]),
            bebs=tuple(bebs),
            tou_usd_per_kwh=float(prices["tou_usd_per_kwh"]),
            tou_period=prices["tou_period"],
            lmp_usd_per_mwh=float(prices["lmp_usd_per_mwh"]),
            violations=violations,
            emergency_beb_ids=frozenset(emergencies),
            infeasible_at_zero=bool(doc["infeasible_at_zero"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RunFormatError(f"malformed snapshot record: {exc}") from exc


@dataclass(frozen=True)
class RunArtifact:
    """One exported simulation run: the stream plus the scenario that
    produced it and the policy name used."""

    stream: SnapshotStream
    scenario: Scenario
    policy: str


def _content_hash(scenario_doc, snapshot_docs, policy: str) -> str:
    payload = canonical_json({"policy": policy, "scenario": scenario_doc, "snapshots": snapshot_docs})
    return hashlib.sha256(payload.encode()).hexdigest()


def export_run(stream: SnapshotStream, scenario: Scenario, policy: str, path) -> None:
    """Write a self-contained run file (scenario embedded). Deterministic:
    identical runs produce byte-identical files."""
    scenario_doc = scenario_to_doc(scenario)
    snapshot_docs = [snapshot_to_doc(s) for s in stream.snapshots]
    doc = {
        "format": RUN_FORMAT,
        "format_version": RUN_FORMAT_VERSION,
        "policy": policy,
        "scenario_fingerprint": stream.scenario_fingerprint,
        "content_sha256": _content_hash(scenario_doc, snapshot_docs, policy),
        "scenario": scenario_doc,
        "snapshots": snapshot_docs,
    }
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def import_run(path) -> RunArtifact:
    """Read a run file back, verifying version and content hashes."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RunFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != RUN_FORMAT:
        raise RunFormatError(f"{path}: not a run document (format={doc.get('format') if isinstance(doc, dict) else None!r})")
    if doc.get("format_version") != RUN_FORMAT_VERSION:
        raise RunVersionError(
            f"{path}: unsupported run format_version {doc.get('format_version')!r}, "
            f"expected {RUN_FORMAT_VERSION}"
        )
    for key in ("policy", "scenario_fingerprint", "content_sha256", "scenario", "snapshots"):
        if key not in doc:
            raise RunFormatError(f"{path}: missing required key {key!r}")
    recomputed = _content_hash(doc["scenario"], doc["snapshots"], doc["policy"])
    if recomputed != doc["content_sha256"]:
        raise FingerprintMismatchError(f"{path}: content hash mismatch; the file was modified or corrupted")
    scenario = doc_to_scenario(doc["scenario"])
    fingerprint = scenario_fingerprint(scenario)
    if fingerprint != doc["scenario_fingerprint"]:
        raise FingerprintMismatchError(f"{path}: scenario fingerprint mismatch")
    snapshots = tuple(doc_to_snapshot(s) for s in doc["snapshots"])
    stream = SnapshotStream(fingerprint, snapshots)
    return RunArtifact(stream, scenario, doc["policy"])


def verify_stream(stream: SnapshotStream, scenario: Scenario) -> list[str]:
    """Re-check derived-field consistency of every stored snapshot:
    station occupancy counts, station power sums, and node load
    composition. Returns human-readable inconsistencies (empty = ok)."""
    problems: list[str] = []
    station_pos = {st.id: k for k, st in enumerate(scenario.stations)}
    station_at_node = {st.linked_node: k for k, st in enumerate(scenario.stations)}
    root = scenario.substation_id()
    for snap in stream.snapshots:
        counts = [0] * len(scenario.stations)
        powers = [0.0] * len(scenario.stations)
        for b in snap.bebs:
            if isinstance(b.location, AtStation):
                k = station_pos[b.location.station_id]
                counts[k] += 1
                powers[k] += b.charging_kw
            elif b.charging_kw > 0:
                problems.append(f"t={snap.t}: beb[{b.beb_id}] charging while on the road")
        for k, st in enumerate(scenario.stations):
            if counts[k] != snap.station_n_bebs[k]:
                problems.append(
                    f"t={snap.t}: station[{st.id}] occupancy {snap.station_n_bebs[k]} != derived {counts[k]}"
                )
            if abs(powers[k] - snap.station_p_kw[k]) > 1e-9:
                problems.append(
                    f"t={snap.t}: station[{st.id}] power {snap.station_p_kw[k]} != derived {powers[k]}"
                )
        for i, node in enumerate(scenario.nodes):
            expected = 0.0 if node.id == root else node.inflexible_p_kw[snap.t]
            k = station_at_node.get(node.id)
            if k is not None:
                expected += snap.station_p_kw[k]
            if abs(expected - snap.node_p_load_kw[i]) > 1e-9:
                problems.append(
                    f"t={snap.t}: node[{node.id}] load {snap.node_p_load_kw[i]} != derived {expected}"
                )
    return problems
