"""Car-travel model: road graphs, the travel HDMN, simulation, goal extraction and scoring."""

from .goals import GoalSet, extract_goals
from .io import read_trajectory, write_trajectory
from .model import TransportHDMN, TransportParams, build_transport_model, default_goals, goal_switch_constraints
from .roads import RoadGraph, grid_graph, read_roads, write_roads
from .scoring import ScoreReport, predict_and_score
from .simulate import Trajectory, simulate

__all__ = [
    "GoalSet", "RoadGraph", "ScoreReport", "Trajectory", "TransportHDMN", "TransportParams",
    "build_transport_model", "default_goals", "extract_goals", "goal_switch_constraints", "grid_graph",
    "predict_and_score", "read_roads", "read_trajectory", "simulate", "write_roads", "write_trajectory",
]
