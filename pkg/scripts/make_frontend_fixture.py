#!/usr/bin/env python3
"""Regenerate frontend/tests/fixture.json from the bundled scenario.

The fixture holds real service response bodies (scenario plus a few
snapshots and series) so the dashboard tests assert against the same
payload shapes the live API serves.
"""
import json
from pathlib import Path

import transitgrid as tg
from transitgrid.service import _scenario_doc
from transitgrid.store import snapshot_to_doc, series

SAMPLE_STEPS = (0, 100, 156)

scenario = tg.load_scenario(tg.bundled_scenario_path())
stream = tg.run_horizon(scenario, tg.decide_charges)

fixture = {
    "scenario": _scenario_doc(scenario, stream, "opportunistic"),
    "snapshots": {str(t): snapshot_to_doc(stream.snapshots[t]) for t in SAMPLE_STEPS},
    "series": {
        "station-3/p_kw": series(stream, "station-3", "p_kw"),
        "station-3/n_bebs_present": series(stream, "station-3", "n_bebs_present"),
        "node-7/p_load_kw": series(stream, "node-7", "p_load_kw"),
        "node-7/v_pu": series(stream, "node-7", "v_pu"),
        "line-6/i_pu": series(stream, "line-6", "i_pu"),
        "beb-12/soc_kwh": series(stream, "beb-12", "soc_kwh"),
        "price/tou_usd_per_kwh": series(stream, "price", "tou_usd_per_kwh"),
        "price/lmp_usd_per_mwh": series(stream, "price", "lmp_usd_per_mwh"),
    },
}

out = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixture.json"
out.parent.mkdir(parents=True, exist_ok=True)
out.write_text(json.dumps(fixture), encoding="utf-8")
print(f"wrote {out} ({out.stat().st_size // 1024} KiB)")
