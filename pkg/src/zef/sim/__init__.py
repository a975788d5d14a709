"""Deterministic simulator: programmable network, scripted clients, trace checkers."""

from .checkers import ALL_CHECKERS, SAFETY_CHECKERS, Verdict, run_checkers
from .enumerate import EnumerationResult, ScheduleExplorer, enumerate_small_schedules
from .network import FaultPlan, Partition, SimNetwork
from .runner import Simulation, minimize, run_many, run_scenario
from .scenario import GenesisSpec, Scenario, ScriptOp, random_scenario
from .trace import Trace, VoteRecord

__all__ = [
    "ALL_CHECKERS",
    "EnumerationResult",
    "FaultPlan",
    "GenesisSpec",
    "Partition",
    "SAFETY_CHECKERS",
    "ScheduleExplorer",
    "Scenario",
    "ScriptOp",
    "SimNetwork",
    "Simulation",
    "Trace",
    "Verdict",
    "VoteRecord",
    "enumerate_small_schedules",
    "minimize",
    "random_scenario",
    "run_checkers",
    "run_many",
    "run_scenario",
]
