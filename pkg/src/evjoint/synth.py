"""Labeled synthetic event streams from a moving two-level brightness pattern.

Patterns are reduced to material emitter points on their brightness edges
(one per pixel of edge length). As a point translates, it fires one event
each time it enters a new pixel cell, provided the pattern's log-brightness
step clears the contrast threshold. That yields events lying exactly on the
moving edge, full ground truth per event, and a known collapsing motion.
Noise events are uniform over the sensor and the time span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import Events, EventWindow, SensorGeometry
from .warp import TRANSLATION_2D, MotionParams

# log-brightness amplitude of the idealized two-level pattern
PROFILE_STEP = 1.0


@dataclass(frozen=True)
class VerticalEdge:
    """Single vertical brightness edge starting at column x0."""

    x0: float


@dataclass(frozen=True)
class Dot:
    """Disk of the given radius; events come from its boundary."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0):
            raise ValueError("dot radius must be positive")


@dataclass(frozen=True)
class MultiEdge:
    """Square grid of edges with the given spacing, both orientations.

    The two line families make both velocity components observable, which
    a lone straight edge cannot (aperture problem).
    """

    spacing: float

    def __post_init__(self) -> None:
        if not (self.spacing > 0):
            raise ValueError("edge spacing must be positive")


@dataclass(frozen=True)
class SceneSpec:
    geometry: SensorGeometry
    pattern: VerticalEdge | Dot | MultiEdge
    motion: MotionParams
    duration: float
    contrast: float = 1.0
    noise_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.motion.model != TRANSLATION_2D:
            raise ValueError("synthetic scenes support the translation model only")
        if not (self.duration > 0):
            raise ValueError("duration must be positive")
        if not (self.contrast > 0):
            raise ValueError("contrast threshold must be positive")
        if not (0.0 <= self.noise_rate < 1.0):
            raise ValueError("noise_rate must be in [0, 1)")


def _pattern_emitters(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Emitter start positions (M, 2) and per-emitter polarities (M,)."""
    g = spec.geometry
    pat = spec.pattern
    if isinstance(pat, VerticalEdge):
        ys = np.arange(g.height) + 0.5
        pts = np.stack([np.full_like(ys, pat.x0), ys], axis=1)
        pol = np.ones(len(pts), dtype=np.int8)
        return pts, pol
    if isinstance(pat, MultiEdge):
        pts_list = []
        pol_list = []
        xs_lines = np.arange(pat.spacing / 2.0, g.width, pat.spacing)
        for k, xl in enumerate(xs_lines):
            ys = np.arange(g.height) + 0.5
            pts_list.append(np.stack([np.full_like(ys, xl), ys], axis=1))
            pol_list.append(np.full(g.height, 1 if k % 2 == 0 else -1, dtype=np.int8))
        ys_lines = np.arange(pat.spacing / 2.0, g.height, pat.spacing)
        for k, yl in enumerate(ys_lines):
            xs = np.arange(g.width) + 0.5
            pts_list.append(np.stack([xs, np.full_like(xs, yl)], axis=1))
            pol_list.append(np.full(g.width, 1 if k % 2 == 0 else -1, dtype=np.int8))
        return np.concatenate(pts_list), np.concatenate(pol_list)
    if isinstance(pat, Dot):
        count = max(8, int(round(2.0 * math.pi * pat.radius)))
        ang = 2.0 * math.pi * np.arange(count) / count
        direction = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts = np.asarray(pat.center, dtype=np.float64)[None, :] + pat.radius * direction
        v = spec.motion.values
        if np.allclose(v, 0.0):
            pol = np.ones(count, dtype=np.int8)
        else:
            # boundary points facing the motion enter darker pixels
            pol = np.where(direction @ v > 0.0, -1, 1).astype(np.int8)
        return pts, pol
    raise TypeError(f"unknown pattern {pat!r}")


def _axis_crossings(q0: float, v: float, duration: float) -> np.ndarray:
    """Times in (0, duration] at which q0 + v t crosses an integer lattice."""
    if v == 0.0:
        return np.empty(0)
    q1 = q0 + v * duration
    if v > 0.0:
        first = math.floor(q0) + 1
        last = math.floor(q1)
    else:
        first = math.ceil(q1)
        last = math.ceil(q0) - 1
    if last < first:
        return np.empty(0)
    lattice = np.arange(first, last + 1, dtype=np.float64)
    times = (lattice - q0) / v
    return times[(times > 0.0) & (times <= duration)]


def _signal_events(spec: SceneSpec) -> Events:
    if spec.contrast > PROFILE_STEP:
        # the two-level profile never clears the threshold
        return Events.empty()
    g = spec.geometry
    vx, vy = spec.motion.values
    emitters, pol = _pattern_emitters(spec)
    xs, ys, ts, ps = [], [], [], []
    for (qx, qy), p in zip(emitters, pol):
        times = np.concatenate(
            [_axis_crossings(qx, vx, spec.duration), _axis_crossings(qy, vy, spec.duration)]
        )
        if times.size == 0:
            continue
        ex = qx + vx * times
        ey = qy + vy * times
        inside = (ex >= 0.0) & (ex < g.width) & (ey >= 0.0) & (ey < g.height)
        xs.append(ex[inside])
        ys.append(ey[inside])
        ts.append(times[inside])
        ps.append(np.full(int(inside.sum()), p, dtype=np.int8))
    if not xs:
        return Events.empty()
    return Events(
        np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ps),
        validate=False,
    )


def _noise_count(n_signal: int, rate: float) -> int:
    """Deterministic noise count: the n solving n == round(rate * (n_signal + n))."""
    if rate <= 0.0:
        return 0
    n0 = int(round(n_signal * rate / (1.0 - rate)))
    for cand in (n0 - 1, n0, n0 + 1):
        if cand >= 0 and int(round(rate * (n_signal + cand))) == cand:
            return cand
    return max(n0, 0)


def generate(spec: SceneSpec, seed: int) -> tuple[EventWindow, np.ndarray, MotionParams]:
    """Build one labeled window: (window, is_signal labels, ground-truth theta).

    The returned motion parameters are the collapsing warp, i.e. the value
    an estimator should recover; for a pattern moving at velocity v that is
    -v under the x' = x + (t - t_ref) theta convention.
    """
    signal = _signal_events(spec)
    if len(signal) == 0:
        raise ValueError("pattern produces no events inside the sensor for this scene")
    n_noise = _noise_count(len(signal), spec.noise_rate)
    rng = np.random.default_rng(seed)
    g = spec.geometry
    noise = Events(
        rng.uniform(0.0, g.width, n_noise),
        rng.uniform(0.0, g.height, n_noise),
        rng.uniform(0.0, spec.duration, n_noise),
        rng.choice(np.array([-1, 1], dtype=np.int8), n_noise),
        validate=False,
    )
    merged = Events.concatenate([signal, noise])
    labels = np.zeros(len(merged), dtype=bool)
    labels[: len(signal)] = True
    order = np.argsort(merged.t, kind="stable")
    merged = merged.take(order)
    labels = labels[order]
    window = EventWindow(merged, g, 0.0, spec.duration, spec.duration / 2.0)
    vx, vy = spec.motion.values
    return window, labels, MotionParams.translation(-vx, -vy)
