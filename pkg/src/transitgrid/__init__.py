"""Co-simulation of battery-electric-bus transit and a radial distribution
feeder, with TOU-aware charging scheduling, snapshot storage, and an HTTP
API for the operations dashboard."""

from importlib.resources import files as _files

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
    ScenarioValidationError,
    Tariff,
    TimeGrid,
    ValidationReport,
    timestep_clock,
    validate_scenario,
)
from .policy import (
    ChargeDecision,
    PolicyOutcome,
    POLICIES,
    decide_charges,
    demand_charge,
    energy_cost,
    naive_policy,
    tou_period,
    upstream_cost,
)
from .powerflow import (
    FlowSolution,
    ModelBreakdownError,
    NodalLoad,
    NonRadialError,
    Violation,
    check_limits,
    inject_station_loads,
    solve_lindistflow,
    substation_power,
)
from .report import CostReport, HorizonSummary, summarize
from .scenario_io import (
    ScenarioFormatError,
    load_scenario,
    scenario_fingerprint,
    write_scenario,
)
from .store import (
    RunArtifact,
    Snapshot,
    SnapshotStream,
    export_run,
    import_run,
    series,
    snapshot_at,
    verify_stream,
)
from .transit import (
    AtStation,
    BebState,
    FleetState,
    OnRoad,
    apply_charge,
    discharge_energy,
    position_of,
    run_horizon,
    step,
)

__version__ = "0.1.0"


def bundled_scenario_path():
    """Path to the packaged parkcity33 scenario file."""
    return _files("transitgrid").joinpath("data", "parkcity33.scenario")
