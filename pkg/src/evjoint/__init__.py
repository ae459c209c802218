"""evjoint: joint motion compensation and denoising for event-camera streams."""

from .baselines import BafConfig, baf_filter, cmax_solve, sequential_pipeline
from .contrast import (
    ConfidenceMap,
    ContrastMap,
    hard_map,
    map_variance,
    smooth_map,
    variance_gradients,
    weighted_map,
)
from .events import (
    Event,
    Events,
    EventWindow,
    FixedCount,
    FixedDuration,
    FormatError,
    LoadedStream,
    SensorGeometry,
    read_events,
    window_stream,
    write_events,
)
from .joint import (
    AdamState,
    ExplicitBaseline,
    JointConfig,
    JointResult,
    ObjectiveParts,
    WarmStartScaled,
    adam_step,
    interpolate_confidence,
    objective,
    objective_gradients,
    solve,
)
from .metrics import ConfusionCounts, ConfusionResult, confusion, esr, motion_rmse
from .synth import Dot, MultiEdge, SceneSpec, VerticalEdge, generate
from .warp import MotionParams, WarpedEvents, warp, warp_jacobian

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BafConfig",
    "ConfidenceMap",
    "ConfusionCounts",
    "ConfusionResult",
    "ContrastMap",
    "Dot",
    "Event",
    "Events",
    "EventWindow",
    "ExplicitBaseline",
    "FixedCount",
    "FixedDuration",
    "FormatError",
    "JointConfig",
    "JointResult",
    "LoadedStream",
    "MotionParams",
    "MultiEdge",
    "ObjectiveParts",
    "SceneSpec",
    "SensorGeometry",
    "VerticalEdge",
    "WarpedEvents",
    "WarmStartScaled",
    "adam_step",
    "baf_filter",
    "cmax_solve",
    "confusion",
    "esr",
    "generate",
    "hard_map",
    "interpolate_confidence",
    "map_variance",
    "motion_rmse",
    "objective",
    "objective_gradients",
    "read_events",
    "sequential_pipeline",
    "smooth_map",
    "solve",
    "variance_gradients",
    "warp",
    "warp_jacobian",
    "weighted_map",
    "window_stream",
    "write_events",
]
