"""Multi-perspective surgical tool tracking.

Tracks carry three identities at once (visibility, intracorporeal and
intraoperative) and are associated by a harmonizing bipartite matcher that can
weigh box overlap, motion, appearance and the direction a tool comes from.
"""

from .assignment import GATE, Assignment, solve, solve_bruteforce
from .config import AssociationConfig, FeatureSelection
from .costs import class_gate, ensemble, feature_cost
from .errors import ConfigError, FormatError
from .hbgm import RunResult, Tracker, run, step
from .metrics import EvalInput, MetricsReport, evaluate, fps_harness, stratify
from .sim import ScenarioSpec, SimOutput, generate, preset, random_scenario
from .tables import GroundTruth, TrackTable
from .track_model import BBox, Detection, EmbeddingSet, FrameObservations, Operator, State, ToolClass

__version__ = "0.1.0"

__all__ = [
    "GATE",
    "Assignment",
    "AssociationConfig",
    "BBox",
    "ConfigError",
    "Detection",
    "EmbeddingSet",
    "EvalInput",
    "FeatureSelection",
    "FormatError",
    "FrameObservations",
    "GroundTruth",
    "MetricsReport",
    "Operator",
    "RunResult",
    "ScenarioSpec",
    "SimOutput",
    "State",
    "ToolClass",
    "TrackTable",
    "Tracker",
    "class_gate",
    "ensemble",
    "evaluate",
    "feature_cost",
    "fps_harness",
    "generate",
    "preset",
    "random_scenario",
    "run",
    "solve",
    "solve_bruteforce",
    "step",
    "stratify",
]
