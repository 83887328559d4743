"""
flowplan - Monte Carlo portfolio planning for constrained workflows
"""

__version__ = "1.0.0"
__author__ = "flowplan developers"
__description__ = "Budget- and deadline-aware model and width allocation for DAG workflows"

from src.systems.planner import PlannerConfig, run_mcpp, select_action

__all__ = ["PlannerConfig", "run_mcpp", "select_action"]
