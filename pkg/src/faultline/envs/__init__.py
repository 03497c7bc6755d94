"""Simulation environments: search-evasion, formation control, power grid."""

from .base import Environment, Trajectory, bezier_eval, smooth_max, smooth_min
from .formation import FormationConfig, FormationEnv
from .powergrid import GridCase, GridEnv, bundled_case, load_case, parse_case
from .search import SearchConfig, SearchEnv

__all__ = [
    "Environment", "Trajectory", "bezier_eval", "smooth_min", "smooth_max",
    "SearchConfig", "SearchEnv", "FormationConfig", "FormationEnv",
    "GridCase", "GridEnv", "bundled_case", "load_case", "parse_case",
]
