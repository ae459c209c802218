"""Comparison methods: density filtering, plain contrast maximization, and
their sequential combination."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from .contrast import ConfidenceMap, hard_map
from .events import EventWindow
from .joint import DEGENERATE_MIN_EVENTS, JointConfig, JointResult, ea_ascent
from .warp import MotionParams


@dataclass(frozen=True)
class BafConfig:
    """Background-activity filter: keep events with enough spatiotemporal neighbors.

    Neighborhoods are L-infinity balls on integer pixel coordinates with
    temporal support |dt| <= dt_max in both directions.
    """

    dt_max: float = 0.010
    radius: int = 1
    min_support: int = 1

    def __post_init__(self) -> None:
        if not (self.dt_max > 0):
            raise ValueError("dt_max must be positive")
        if self.radius < 1:
            raise ValueError("radius must be at least 1")
        if self.min_support < 1:
            raise ValueError("min_support must be at least 1")


def baf_filter(window: EventWindow, cfg: BafConfig) -> np.ndarray:
    """Label each event signal iff enough other events fall in its neighborhood.

    Exact bidirectional count via per-pixel sorted time lists and binary
    search: O(N * neighborhood * log K).
    """
    n = len(window)
    labels = np.zeros(n, dtype=bool)
    if n == 0:
        return labels
    ev = window.events
    px = np.floor(ev.x).astype(np.int64)
    py = np.floor(ev.y).astype(np.int64)
    per_pixel: dict[tuple[int, int], list[float]] = {}
    for k in range(n):
        per_pixel.setdefault((int(px[k]), int(py[k])), []).append(float(ev.t[k]))
    r = cfg.radius
    for k in range(n):
        t = float(ev.t[k])
        lo, hi = t - cfg.dt_max, t + cfg.dt_max
        count = -1  # discount the event itself
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                times = per_pixel.get((int(px[k]) + dx, int(py[k]) + dy))
                if times:
                    count += bisect_right(times, hi) - bisect_left(times, lo)
            if count >= cfg.min_support:
                break
        labels[k] = count >= cfg.min_support
    return labels


def cmax_solve(window: EventWindow, model: str, cfg: JointConfig) -> MotionParams:
    """Estimate motion by Adam ascent on the alignment variance alone."""
    if len(window) < DEGENERATE_MIN_EVENTS:
        return MotionParams.zero(model)
    phi, _ = ea_ascent(window, model, cfg, cfg.iterations)
    tspan = window.t_end - window.t_start
    return MotionParams(model, phi / (tspan if tspan > 0 else 1.0))


def sequential_pipeline(window: EventWindow, baf_cfg: BafConfig,
                        cmax_cfg: JointConfig, model: str = "translation2d") -> JointResult:
    """Denoise first, then estimate motion on the kept subset.

    Labels come from the density filter; motion from contrast maximization
    over the kept events only; the confidence map is the binary mask of
    pixels holding at least one kept event.
    """
    keep = baf_filter(window, baf_cfg)
    kept_window = EventWindow(
        window.events.take(keep), window.geometry, window.t_start, window.t_end, window.t_ref
    )
    theta = cmax_solve(kept_window, model, cmax_cfg)
    kept_mask = hard_map(kept_window.positions, window.geometry).values > 0
    conf = ConfidenceMap.from_weights_mask(kept_mask)
    return JointResult(
        theta=theta,
        conf=conf,
        labels=keep,
        trace=[],
        warm_trace=[],
        final=None,
        b_ea=float("nan"),
        b_ed=float("nan"),
        alpha=float("nan"),
    )
