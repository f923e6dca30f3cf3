"""Distributed AIMD resource allocation: utilities, agents, simulator, solvers, games."""
from .agents import AimdParams, AgentState, aimd_step, daimd_step, paimd_step, qaimd_step
from .baseline import BaselineResult, brute_force_oracle, solve_concave, solve_sigmoidal
from .engine import ScenarioConfig, UtilitySpec, efficiency, run_simulation, sweep
from .estimators import AIMDAllocator, CentralizedAllocator, NashAllocator
from .game import GameConfig, NashResult, nash_solve, poa
from .utility import LogUtility, PayoffUtility, PenaltyFn, SigmoidUtility, StepUtility

__version__ = "0.1.0"

__all__ = [
    "AimdParams", "AgentState", "aimd_step", "daimd_step", "paimd_step", "qaimd_step",
    "BaselineResult", "brute_force_oracle", "solve_concave", "solve_sigmoidal",
    "ScenarioConfig", "UtilitySpec", "efficiency", "run_simulation", "sweep",
    "AIMDAllocator", "CentralizedAllocator", "NashAllocator",
    "GameConfig", "NashResult", "nash_solve", "poa",
    "LogUtility", "PayoffUtility", "PenaltyFn", "SigmoidUtility", "StepUtility",
]
