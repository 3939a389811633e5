"""Association configuration shared by the tracker, the state machine and the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError

FEATURES = ("IOU", "BYTE", "KF", "CMC", "MC", "AF", "SF", "DF")
# features that produce a cost matrix; the rest are pipeline switches
COST_FEATURES = ("IOU", "KF", "AF", "SF", "DF")
ENSEMBLE_MODES = ("Min", "Avg", "wAvg", "Vote", "wVote", "wAV")
PERSPECTIVES = ("visibility", "intracorporeal", "intraoperative")

DEFAULT_WEIGHTS = {"DF": 0.5, "AF": 0.2, "SF": 0.2, "IOU": 0.1, "KF": 0.1}


@dataclass(frozen=True)
class FeatureSelection:
    flags: frozenset = frozenset({"IOU", "BYTE", "MC", "DF"})
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        flags = frozenset(str(f).upper() for f in self.flags)
        unknown = flags - set(FEATURES)
        if unknown:
            raise ConfigError(f"unknown re-ID feature(s): {sorted(unknown)}")
        object.__setattr__(self, "flags", flags)
        weights = dict(DEFAULT_WEIGHTS)
        weights.update({str(k).upper(): float(v) for k, v in dict(self.weights).items()})
        for name, w in weights.items():
            if name not in COST_FEATURES:
                raise ConfigError(f"weight given for non-cost feature {name!r}")
            if not w >= 0:
                raise ConfigError(f"weight for {name} must be >= 0, got {w}")
        object.__setattr__(self, "weights", weights)
        if not self.cost_features:
            raise ConfigError("at least one of IOU, KF, AF, SF, DF must be enabled")
        if sum(weights[f] for f in self.cost_features) <= 0:
            raise ConfigError("weights of the enabled cost features sum to zero")

    @classmethod
    def of(cls, *names, **weights) -> "FeatureSelection":
        return cls(frozenset(names), weights)

    @property
    def cost_features(self) -> tuple:
        return tuple(f for f in COST_FEATURES if f in self.flags)

    def __contains__(self, name) -> bool:
        return name in self.flags

    def weight_vector(self) -> list:
        return [self.weights[f] for f in self.cost_features]


@dataclass(frozen=True)
class AssociationConfig:
    """Every knob of one tracking run.

    Thresholds are on the shared [0, 1] cost scale; a pair is accepted when its
    cost is at most the threshold, so the OOCV threshold is the most permissive
    and the OOB threshold the strictest.  Lifecycle timers count frames on the
    base 25-tick clock, measured as frame-number gaps so that subsampled input
    keeps real-time semantics.
    """

    features: FeatureSelection = field(default_factory=FeatureSelection)
    ensemble_mode: str = "wAV"
    match_threshold: float = 0.6
    oocv_threshold: float = 0.7
    oob_threshold: float = 0.4
    byte_high: float = 0.5
    byte_low: float = 0.1
    t_lost: int = 3
    t_oocv: int = 25
    t_oob: int = 250
    t_retire: int = 5000
    border_margin: float = 0.1
    frame_size: tuple | None = (854, 480)
    kb_max_instances: Mapping[int, int] | None = None
    kb_step: float = 0.05
    kb_ceiling: float = 0.95
    perspectives: tuple = PERSPECTIVES
    history_cap: int = 30
    centroid_momentum: float = 0.9
    direction_metric: str = "euclidean"
    appearance_metric: str = "cosine"
    process_noise: float = 1.0
    measurement_noise: float = 1.0

    def __post_init__(self):
        if isinstance(self.features, (set, frozenset, list, tuple)):
            object.__setattr__(self, "features", FeatureSelection(frozenset(self.features)))
        if self.ensemble_mode not in ENSEMBLE_MODES:
            raise ConfigError(f"unknown ensemble mode {self.ensemble_mode!r}; expected one of {ENSEMBLE_MODES}")
        if not (self.oob_threshold < self.match_threshold <= self.oocv_threshold):
            raise ConfigError(
                "thresholds must satisfy oob_threshold < match_threshold <= oocv_threshold, got "
                f"{self.oob_threshold}, {self.match_threshold}, {self.oocv_threshold}"
            )
        if not (0 <= self.byte_low < self.byte_high <= 1):
            raise ConfigError(f"BYTE thresholds need 0 <= low < high <= 1, got low={self.byte_low} high={self.byte_high}")
        timers = (self.t_lost, self.t_oocv, self.t_oob, self.t_retire)
        if not (0 < timers[0] < timers[1] < timers[2] < timers[3]):
            raise ConfigError(f"lifecycle timers must be strictly increasing and positive, got {timers}")
        if not 0 <= self.border_margin < 0.5:
            raise ConfigError("border_margin must lie in [0, 0.5)")
        if self.frame_size is not None:
            fw, fh = self.frame_size
            if fw <= 0 or fh <= 0:
                raise ConfigError("frame_size must be positive")
            object.__setattr__(self, "frame_size", (int(fw), int(fh)))
        if self.kb_max_instances is not None:
            caps = {int(k): int(v) for k, v in dict(self.kb_max_instances).items()}
            for c, n in caps.items():
                if not 0 <= c <= 6:
                    raise ConfigError(f"KB cap given for unknown class {c}")
                if n < 1:
                    raise ConfigError(f"KB cap for class {c} must be >= 1")
            object.__setattr__(self, "kb_max_instances", caps)
        if not 0 < self.kb_step or not self.match_threshold < self.kb_ceiling:
            raise ConfigError("kb_step must be > 0 and kb_ceiling above match_threshold")
        bad = set(self.perspectives) - set(PERSPECTIVES)
        if bad:
            raise ConfigError(f"unknown perspective(s) {sorted(bad)}")
        if self.history_cap < 1:
            raise ConfigError("history_cap must be >= 1")
        if not 0 <= self.centroid_momentum < 1:
            raise ConfigError("centroid_momentum must lie in [0, 1)")
        for name in ("direction_metric", "appearance_metric"):
            if getattr(self, name) not in ("euclidean", "cosine"):
                raise ConfigError(f"{name} must be 'euclidean' or 'cosine'")

    @property
    def kb_enabled(self) -> bool:
        return self.kb_max_instances is not None

    def replace(self, **changes) -> "AssociationConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "features":
                value = {
                    "flags": [name for name in FEATURES if name in value.flags],
                    "weights": {k: value.weights[k] for k in COST_FEATURES},
                }
            elif f.name == "kb_max_instances" and value is not None:
                value = {str(k): v for k, v in sorted(value.items())}
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "AssociationConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "features" in kwargs:
            feats = kwargs["features"]
            if isinstance(feats, Mapping):
                extra = set(feats) - {"flags", "weights"}
                if extra:
                    raise ConfigError(f"unknown features key(s): {sorted(extra)}")
                kwargs["features"] = FeatureSelection(
                    frozenset(feats.get("flags", FeatureSelection().flags)),
                    feats.get("weights", {}),
                )
            else:
                kwargs["features"] = FeatureSelection(frozenset(feats))
        for key in ("frame_size", "perspectives"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
