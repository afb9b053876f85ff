"""Evaluation harnesses: GridWorld RL and desk-scale image classification."""

from .gridworld import GridWorld, gridworld_step, observe, random_mission, ACTIONS
from .evaluate import EvalReport, evaluate_policy, eval_supervised

__all__ = [
    "GridWorld",
    "gridworld_step",
    "observe",
    "random_mission",
    "ACTIONS",
    "EvalReport",
    "evaluate_policy",
    "eval_supervised",
]
