"""Command-line entry points: simulate a scenario, serve exported runs,
and regenerate scenario files.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import ScenarioValidationError
from .policy import POLICIES
from .report import summarize, summary_to_doc
from .scenario_io import ScenarioFormatError, load_scenario, write_scenario
from .store import RunFormatError, export_run, import_run
from .transit import run_horizon

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2


def _cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError:
        print(f"error: scenario file not found: {args.scenario}", file=sys.stderr)
        return EXIT_ERROR
    except ScenarioFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ScenarioValidationError as exc:
        print("error: scenario failed validation:", file=sys.stderr)
        for finding in exc.report.findings:
            print(f"  {finding}", file=sys.stderr)
        return EXIT_INVALID

    policy = POLICIES[args.policy]
    try:
        stream = run_horizon(scenario, policy)
    except Exception as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_ERROR

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_path = out / f"run-{args.policy}.json"
    export_run(stream, scenario, args.policy, run_path)
    summary = summarize(stream, scenario, args.policy)
    summary_path = out / f"summary-{args.policy}.json"
    summary_path.write_text(json.dumps(summary_to_doc(summary), indent=1) + "\n", encoding="utf-8")

    print(f"scenario:         {scenario.name} ({args.scenario})")
    print(f"policy:           {args.policy}")
    print(f"snapshots:        {len(stream.snapshots)}")
    print(f"energy cost:      ${summary.costs.energy_cost_usd:,.2f}")
    print(f"demand charge:    ${summary.costs.demand_charge_usd:,.2f}")
    print(f"upstream cost:    ${summary.costs.upstream_purchase_usd:,.2f}")
    print(f"peak charging:    {summary.peak_charging_kwh:,.1f} kWh")
    print(f"emergencies:      {summary.emergency_override_count}")
    print(f"run file:         {run_path}")
    print(f"summary file:     {summary_path}")
    return EXIT_OK


def _find_run(data_dir: Path, name: str | None) -> Path:
    if name:
        path = data_dir / name
        if not path.exists():
            raise FileNotFoundError(f"run file not found: {path}")
        return path
    candidates = sorted(data_dir.glob("*.json"))
    runs = []
    for c in candidates:
        try:
            head = c.read_text(encoding="utf-8", errors="ignore")[:200]
        except OSError:
            continue
        if '"transitgrid-run"' in head:
            runs.append(c)
    if not runs:
        raise FileNotFoundError(f"no exported runs found in {data_dir}")
    return runs[0]


def _cmd_serve(args) -> int:
    try:
        run_path = _find_run(Path(args.data), args.run)
        run = import_run(run_path)
    except (FileNotFoundError, RunFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    import uvicorn

    from .service import create_app

    app = create_app(run)
    print(f"serving {run_path} ({run.policy}) on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_make_scenario(args) -> int:
    from .synth import build_parkcity_scenario, random_scenario

    if args.seed is None:
        scenario = build_parkcity_scenario()
    else:
        scenario = random_scenario(args.seed)
    write_scenario(scenario, args.out)
    print(f"wrote {scenario.name} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transitgrid",
        description="Coupled bus-transit / distribution-feeder simulation and service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one policy over a scenario and export the results")
    sim.add_argument("--scenario", required=True, help="scenario file path")
    sim.add_argument("--policy", choices=sorted(POLICIES), default="opportunistic")
    sim.add_argument("--out", required=True, help="output directory for run and summary files")
    sim.set_defaults(func=_cmd_simulate)

    srv = sub.add_parser("serve", help="serve an exported run over HTTP")
    srv.add_argument("--data", required=True, help="directory holding exported runs")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--run", default=None, help="specific run file name (default: first found)")
    srv.set_defaults(func=_cmd_serve)

    mk = sub.add_parser("make-scenario", help="write the bundled scenario or a seeded variant")
    mk.add_argument("--out", required=True, help="output scenario file path")
    mk.add_argument("--seed", type=int, default=None, help="randomize with this seed (default: bundled case)")
    mk.set_defaults(func=_cmd_make_scenario)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
