"""Parametric motion models: compensate event positions toward a reference time.

Each model maps an event at (x, t) to the position x' where the same scene
point would appear at the window's reference time, and provides the exact
Jacobian of x' with respect to the motion parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventWindow

TRANSLATION_2D = "translation2d"
ROTATION_INPLANE = "rotation_inplane"

_MODEL_DIMS = {TRANSLATION_2D: 2, ROTATION_INPLANE: 1}


@dataclass(frozen=True)
class MotionParams:
    """Motion model name plus its parameter vector.

    translation2d: [v_x, v_y] in pixels/second.
    rotation_inplane: [omega] in radians/second about the image center.
    """

    model: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.model not in _MODEL_DIMS:
            raise ValueError(f"unknown motion model {self.model!r}")
        vals = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if vals.shape != (_MODEL_DIMS[self.model],):
            raise ValueError(
                f"{self.model} takes {_MODEL_DIMS[self.model]} parameters, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("motion parameters must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def translation(cls, vx: float, vy: float) -> "MotionParams":
        return cls(TRANSLATION_2D, np.array([vx, vy], dtype=np.float64))

    @classmethod
    def rotation(cls, omega: float) -> "MotionParams":
        return cls(ROTATION_INPLANE, np.array([omega], dtype=np.float64))

    @classmethod
    def zero(cls, model: str) -> "MotionParams":
        return cls(model, np.zeros(model_dim(model)))

    @property
    def dim(self) -> int:
        return _MODEL_DIMS[self.model]


def model_dim(model: str) -> int:
    try:
        return _MODEL_DIMS[model]
    except KeyError:
        raise ValueError(f"unknown motion model {model!r}") from None


@dataclass(frozen=True)
class WarpedEvents:
    """Motion-compensated positions; one row per source event."""

    positions: np.ndarray
    source: EventWindow
    theta: MotionParams

    def __post_init__(self) -> None:
        if self.positions.shape != (len(self.source), 2):
            raise ValueError("warped positions must be (N, 2) parallel to the source events")


def _rotation_center(window: EventWindow) -> np.ndarray:
    g = window.geometry
    return np.array([(g.width - 1) / 2.0, (g.height - 1) / 2.0])


def warp_positions(
    positions: np.ndarray, dt: np.ndarray, theta: MotionParams, center: np.ndarray | None = None
) -> np.ndarray:
    """Apply the motion model to explicit positions and time offsets dt = t - t_ref."""
    positions = np.asarray(positions, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    if theta.model == TRANSLATION_2D:
        return positions + dt[:, None] * theta.values[None, :]
    # in-plane rotation about the image center
    assert center is not None
    ang = theta.values[0] * dt
    c, s = np.cos(ang), np.sin(ang)
    rel = positions - center[None, :]
    out = np.empty_like(positions)
    out[:, 0] = center[0] + c * rel[:, 0] - s * rel[:, 1]
    out[:, 1] = center[1] + s * rel[:, 0] + c * rel[:, 1]
    return out


def warp(window: EventWindow, theta: MotionParams) -> WarpedEvents:
    """Move every event to its compensated position at the window's t_ref.

    Positions may land outside the sensor; they are kept as-is and simply
    contribute nothing to accumulation maps.
    """
    dt = window.times - window.t_ref
    center = _rotation_center(window) if theta.model == ROTATION_INPLANE else None
    return WarpedEvents(warp_positions(window.positions, dt, theta, center), window, theta)


def warp_jacobian(window: EventWindow, theta: MotionParams) -> np.ndarray:
    """Per-event Jacobian d(x', y')/d(theta), shape (N, 2, dim)."""
    dt = window.times - window.t_ref
    n = len(window)
    if theta.model == TRANSLATION_2D:
        jac = np.zeros((n, 2, 2))
        jac[:, 0, 0] = dt
        jac[:, 1, 1] = dt
        return jac
    center = _rotation_center(window)
    ang = theta.values[0] * dt
    c, s = np.cos(ang), np.sin(ang)
    rel = window.positions - center[None, :]
    jac = np.empty((n, 2, 1))
    jac[:, 0, 0] = dt * (-s * rel[:, 0] - c * rel[:, 1])
    jac[:, 1, 0] = dt * (c * rel[:, 0] - s * rel[:, 1])
    return jac
