from .clear import ClearResult, eval_clear
from .harness import fps_harness, subsample
from .hota import ALPHAS, HotaResult, eval_hota
from .identity import IdentityResult, eval_counts, eval_idf1
from .report import EvalInput, MetricsReport, evaluate, merge_sequences, stratify, without_fps

__all__ = [
    "ALPHAS",
    "ClearResult",
    "EvalInput",
    "HotaResult",
    "IdentityResult",
    "MetricsReport",
    "eval_clear",
    "eval_counts",
    "eval_hota",
    "eval_idf1",
    "evaluate",
    "fps_harness",
    "merge_sequences",
    "stratify",
    "subsample",
    "without_fps",
]
