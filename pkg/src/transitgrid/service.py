"""Read-only HTTP API over one exported run (docs/http-api.md).

Every response is a pure projection of the immutable run data, carries a
schema_version, and labels its numbers with units and the per-unit bases.
Cross-origin reads are allowed so the dashboard can be served separately.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .model import Scenario, timestep_clock
from .report import summarize, summary_to_doc
from .store import (
    SERIES_FIELDS,
    SERIES_UNITS,
    RunArtifact,
    SnapshotStream,
    UnknownComponentError,
    UnknownFieldError,
    series,
    snapshot_at,
    snapshot_to_doc,
)

SCHEMA_VERSION = 1


def _scenario_doc(scenario: Scenario, stream: SnapshotStream, policy: str) -> dict:
    grid = scenario.grid
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "policy": policy,
        "scenario_fingerprint": stream.scenario_fingerprint,
        "counts": scenario.counts(),
        "time": {
            "start_clock_hour": grid.start_clock_hour,
            "step_minutes": grid.step_minutes,
            "num_steps": grid.num_steps,
            "labels": [timestep_clock(t, grid) for t in range(grid.num_steps)],
        },
        "per_unit_bases": {"kv": scenario.base_kv, "mva": scenario.base_mva},
        "nodes": [
            {
                "id": n.id,
                "is_substation": n.is_substation,
                "v_min_pu": n.v_min,
                "v_max_pu": n.v_max,
            }
            for n in scenario.nodes
        ],
        "lines": [
            {
                "id": k + 1,
                "from_node": ln.from_node,
                "to_node": ln.to_node,
                "r_pu": ln.r_pu,
                "x_pu": ln.x_pu,
                "i_max_pu": ln.i_max_pu,
            }
            for k, ln in enumerate(scenario.lines)
        ],
        "stations": [
            {
                "id": st.id,
                "linked_node": st.linked_node,
                "charger_rating_kw": st.charger_rating_kw,
                "n_chargers": st.n_chargers,
                "layout_xy": list(st.layout_xy),
            }
            for st in scenario.stations
        ],
        "coupling_links": [
            {"station_id": cl.station_id, "node_id": cl.node_id} for cl in scenario.coupling_links
        ],
        "roads": [
            {"id": r.id, "endpoints": list(r.endpoints), "length_miles": r.length_miles}
            for r in scenario.roads
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
            for r in scenario.routes
        ],
        "bebs": [
            {
                "id": b.id,
                "route_id": b.route_id,
                "capacity_kwh": b.capacity_kwh,
                "e_min_kwh": b.e_min_kwh,
                "e_max_kwh": b.e_max_kwh,
                "consumption_kwh_per_mile": b.consumption_kwh_per_mile,
            }
            for b in scenario.bebs
        ],
        "tariff": {
            "tou_period": list(scenario.tariff.tou_period),
            "demand_rate_usd_per_kw": scenario.tariff.demand_rate_usd_per_kw,
            "demand_interval_minutes": scenario.tariff.demand_interval_minutes,
        },
        "series_fields": {kind: list(fields) for kind, fields in SERIES_FIELDS.items()},
        "units": dict(SERIES_UNITS),
    }


def create_app(run: RunArtifact) -> FastAPI:
    app = FastAPI(title="transitgrid service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"], allow_headers=["*"]
    )
    stream = run.stream
    scenario = run.scenario
    num_steps = scenario.grid.num_steps
    scenario_body = _scenario_doc(scenario, stream, run.policy)
    summary_body = {"schema_version": SCHEMA_VERSION, **summary_to_doc(summarize(stream, scenario, run.policy))}

    @app.get("/api/v1/scenario")
    def get_scenario():
        return scenario_body

    @app.get("/api/v1/snapshots/{t}")
    def get_snapshot(t: int):
        if not 0 <= t < num_steps:
            raise HTTPException(
                status_code=404,
                detail={
                    "error": f"no snapshot at step {t}",
                    "valid_range": [0, num_steps - 1],
                },
            )
        snap = snapshot_at(stream, t)
        return {
            "schema_version": SCHEMA_VERSION,
            "clock": timestep_clock(t, scenario.grid),
            "units": dict(SERIES_UNITS),
            **snapshot_to_doc(snap),
        }

    @app.get("/api/v1/series/{component}/{field}")
    def get_series(component: str, field: str):
        try:
            values = series(stream, component, field)
        except UnknownComponentError as exc:
            raise HTTPException(
                status_code=404,
                detail={"error": str(exc), "valid_components": sorted(SERIES_FIELDS)},
            ) from exc
        except UnknownFieldError as exc:
            kind, _, _ = component.rpartition("-")
            kind = component if component == "price" else kind
            raise HTTPException(
                status_code=404,
                detail={"error": str(exc), "valid_fields": list(SERIES_FIELDS.get(kind, ()))},
            ) from exc
        return {
            "schema_version": SCHEMA_VERSION,
            "component": component,
            "field": field,
            "unit": SERIES_UNITS[field],
            "num_steps": num_steps,
            "values": values,
        }

    @app.get("/api/v1/summary")
    def get_summary():
        return summary_body

    return app
