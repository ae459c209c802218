"""Contrast maps: per-pixel event mass, weighted variants, variance, gradients.

Two accumulation flavors are provided. ``hard_map`` counts events per pixel
cell. ``smooth_map`` replaces each event by an isotropic 2-D Gaussian
evaluated at pixel centers, which makes the map (and everything built on
it) differentiable with respect to event positions.

The splatting loops are jitted with numba when available (they dominate the
solver runtime); a vectorized numpy fallback with identical semantics is
used otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


from .events import SensorGeometry

SIGMA_DEFAULT = 1.0

# Kernel support half-width in sigmas. Mass outside is < 2e-8 of a unit
# kernel, small enough that the cutoff never shows up in finite-difference
# gradient checks at 1e-4 steps.
TRUNCATE_SIGMAS = 6.0


@dataclass(frozen=True)
class ContrastMap:
    """H x W grid of accumulated event mass."""

    values: np.ndarray
    geometry: SensorGeometry

    def __post_init__(self) -> None:
        if self.values.shape != self.geometry.shape:
            raise ValueError("map shape does not match geometry")

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-pixel signal confidence, stored as unconstrained logits.

    The usable weights are sigmoid(logits), strictly inside (0, 1), so
    gradient-based updates never need projection.
    """

    logits: np.ndarray

    @classmethod
    def zeros(cls, geometry: SensorGeometry) -> "ConfidenceMap":
        return cls(np.zeros(geometry.shape))

    @classmethod
    def from_weights_mask(cls, mask: np.ndarray, logit_scale: float = 1000.0) -> "ConfidenceMap":
        # +-1000 saturates the logistic to exactly 1.0 / 0.0 in float64
        return cls(np.where(mask, logit_scale, -logit_scale))

    @property
    def weights(self) -> np.ndarray:
        return sigmoid(self.logits)

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape


def hard_map(positions: np.ndarray, geometry: SensorGeometry) -> ContrastMap:
    """Count events per pixel cell; positions outside the sensor are ignored."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    h, w = geometry.shape
    jx = np.floor(positions[:, 0]).astype(np.int64)
    iy = np.floor(positions[:, 1]).astype(np.int64)
    inside = (jx >= 0) & (jx < w) & (iy >= 0) & (iy < h)
    lin = iy[inside] * w + jx[inside]
    counts = np.bincount(lin, minlength=h * w).astype(np.float64)
    return ContrastMap(counts.reshape(h, w), geometry)


@njit(cache=True)
def _nb_accumulate(x, y, h, w, half, inv2s2, norm2, out):
    s = 2 * half + 1
    wxbuf = np.empty(s)
    for k in range(x.shape[0]):
        bx = int(math.floor(x[k]))
        by = int(math.floor(y[k]))
        for b in range(s):
            dxc = (bx + b - half) + 0.5 - x[k]
            wxbuf[b] = math.exp(dxc * dxc * inv2s2)
        for a in range(s):
            i = by + a - half
            if i < 0 or i >= h:
                continue
            dyc = i + 0.5 - y[k]
            wyv = norm2 * math.exp(dyc * dyc * inv2s2)
            for b in range(s):
                j = bx + b - half
                if 0 <= j < w:
                    out[i, j] += wyv * wxbuf[b]


@njit(cache=True)
def _nb_position_grad(x, y, coef, h, w, half, inv2s2, norm2, invs2, out):
    s = 2 * half + 1
    wxbuf = np.empty(s)
    dxbuf = np.empty(s)
    for k in range(x.shape[0]):
        bx = int(math.floor(x[k]))
        by = int(math.floor(y[k]))
        for b in range(s):
            dxc = (bx + b - half) + 0.5 - x[k]
            dxbuf[b] = dxc
            wxbuf[b] = math.exp(dxc * dxc * inv2s2)
        gx = 0.0
        gy = 0.0
        for a in range(s):
            i = by + a - half
            if i < 0 or i >= h:
                continue
            dyc = i + 0.5 - y[k]
            wyv = norm2 * math.exp(dyc * dyc * inv2s2)
            for b in range(s):
                j = bx + b - half
                if 0 <= j < w:
                    cw = coef[i, j] * wyv * wxbuf[b]
                    gx += cw * dxbuf[b]
                    gy += cw * dyc
        out[k, 0] = gx * invs2
        out[k, 1] = gy * invs2


class SplatCache:
    """One Gaussian splat of a position set; reusable for gradient passes."""

    __slots__ = ("geometry", "sigma", "positions", "values", "_half", "_np_cache")

    def __init__(self, positions: np.ndarray, geometry: SensorGeometry, sigma: float):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.geometry = geometry
        self.sigma = float(sigma)
        self.positions = np.ascontiguousarray(
            np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        )
        self._half = int(math.ceil(TRUNCATE_SIGMAS * sigma))
        self._np_cache = None
        h, w = geometry.shape
        n = self.positions.shape[0]
        if n == 0:
            self.values = np.zeros((h, w))
        elif _HAVE_NUMBA:
            out = np.zeros((h, w))
            _nb_accumulate(
                self.positions[:, 0], self.positions[:, 1], h, w,
                self._half, self._inv2s2, self._norm2, out,
            )
            self.values = out
        else:
            self.values = self._numpy_accumulate()

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def _inv2s2(self) -> float:
        return -0.5 / (self.sigma * self.sigma)

    @property
    def _norm2(self) -> float:
        return 1.0 / (2.0 * math.pi * self.sigma * self.sigma)

    def _numpy_parts(self):
        if self._np_cache is None:
            h, w = self.geometry.shape
            offsets = np.arange(-self._half, self._half + 1, dtype=np.int64)
            x = self.positions[:, 0]
            y = self.positions[:, 1]
            jx = np.floor(x).astype(np.int64)[:, None] + offsets[None, :]
            iy = np.floor(y).astype(np.int64)[:, None] + offsets[None, :]
            dx = (jx + 0.5) - x[:, None]
            dy = (iy + 0.5) - y[:, None]
            norm = 1.0 / (math.sqrt(2.0 * math.pi) * self.sigma)
            wx = norm * np.exp(dx * dx * self._inv2s2)
            wy = norm * np.exp(dy * dy * self._inv2s2)
            wx *= (jx >= 0) & (jx < w)
            wy *= (iy >= 0) & (iy < h)
            lin = np.clip(iy, 0, h - 1)[:, :, None] * w + np.clip(jx, 0, w - 1)[:, None, :]
            self._np_cache = (lin, wy[:, :, None] * wx[:, None, :], dx, dy)
        return self._np_cache

    def _numpy_accumulate(self) -> np.ndarray:
        h, w = self.geometry.shape
        lin, wgt, _, _ = self._numpy_parts()
        return np.bincount(
            lin.reshape(-1), weights=wgt.reshape(-1), minlength=h * w
        ).reshape(h, w)

    def position_gradient(self, coefficients: np.ndarray) -> np.ndarray:
        """Gradient of sum_ij coefficients_ij * M_ij w.r.t. positions, (N, 2)."""
        if self.n == 0:
            return np.zeros((0, 2))
        coef = np.ascontiguousarray(coefficients, dtype=np.float64)
        if coef.shape != self.geometry.shape:
            raise ValueError("coefficient grid shape does not match geometry")
        h, w = self.geometry.shape
        invs2 = 1.0 / (self.sigma * self.sigma)
        if _HAVE_NUMBA:
            out = np.empty((self.n, 2))
            _nb_position_grad(
                self.positions[:, 0], self.positions[:, 1], coef, h, w,
                self._half, self._inv2s2, self._norm2, invs2, out,
            )
            return out
        lin, wgt, dx, dy = self._numpy_parts()
        gathered = coef.ravel()[lin] * wgt
        gx = np.einsum("kab,kb->k", gathered, dx) * invs2
        gy = np.einsum("kab,ka->k", gathered, dy) * invs2
        return np.stack([gx, gy], axis=1)


def _splat(positions: np.ndarray, geometry: SensorGeometry, sigma: float) -> SplatCache:
    return SplatCache(positions, geometry, sigma)


def smooth_map(
    positions: np.ndarray, geometry: SensorGeometry, sigma: float = SIGMA_DEFAULT
) -> ContrastMap:
    """Accumulate truncated Gaussian kernels, one per event, at pixel centers."""
    cache = _splat(positions, geometry, sigma)
    return ContrastMap(cache.values, geometry)


def weighted_map(cmap: ContrastMap, conf: ConfidenceMap) -> ContrastMap:
    """Elementwise product of the map with the confidence weights."""
    if conf.shape != cmap.values.shape:
        raise ValueError("confidence map shape does not match contrast map")
    return ContrastMap(conf.weights * cmap.values, cmap.geometry)


def map_variance(cmap) -> float:
    """Population variance over all pixels (divide by H*W)."""
    values = getattr(cmap, "values", cmap)
    return float(np.var(values))


def variance_gradients(
    positions: np.ndarray,
    conf: ConfidenceMap,
    geometry: SensorGeometry,
    sigma: float = SIGMA_DEFAULT,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of var(weights * smooth_map(positions)).

    Returns (d_var/d_positions with shape (N, 2), d_var/d_logits with
    shape (H, W)). Uses d var / d A_ij = 2 (A_ij - mean(A)) / (H W).
    """
    cache = _splat(positions, geometry, sigma)
    m = cache.values
    wts = conf.weights
    if wts.shape != m.shape:
        raise ValueError("confidence map shape does not match geometry")
    a = wts * m
    coef = (2.0 / a.size) * (a - a.mean())
    dlogits = coef * m * wts * (1.0 - wts)
    dpos = cache.position_gradient(coef * wts)
    return dpos, dlogits
