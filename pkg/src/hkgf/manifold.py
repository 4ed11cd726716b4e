"""Poincare-ball primitives.

All functions act on the last axis, so a stack of points ``(..., n)`` is
handled in one call. Everything is computed in float64
(the scalar helpers also accept extended precision).
"""

from dataclasses import dataclass

import numpy as np

# below this value of sqrt(c)*||z|| the log-map scale uses its Taylor series
_SERIES_CUTOFF = 1e-3


@dataclass(frozen=True)
class CurvatureConfig:
    """Ball of curvature ``-c``; ``epsilon`` is the projection margin."""

    c: float = 1e-3
    epsilon: float = 1e-5

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"curvature c must be positive, got {self.c}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def sqrt_c(self):
        return float(np.sqrt(self.c))


def _as_points(z, cfg, name="z"):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0:
        raise ValueError(f"{name} must be a vector, got a scalar")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite values")
    sq = np.sum(z * z, axis=-1)
    if np.any(cfg.c * sq >= 1.0):
        raise ValueError(f"{name} lies outside the Poincare ball (c*||z||^2 >= 1)")
    return z


def artanh(x):
    """Inverse hyperbolic tangent in the log1p form, accurate near 1."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (np.log1p(x) - np.log1p(-x))


def mobius_add(a, b, cfg=CurvatureConfig()):
    a = _as_points(a, cfg, "a")
    b = _as_points(b, cfg, "b")
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    c = cfg.c
    ab = np.sum(a * b, axis=-1, keepdims=True)
    a2 = np.sum(a * a, axis=-1, keepdims=True)
    b2 = np.sum(b * b, axis=-1, keepdims=True)
    num = (1 + 2 * c * ab + c * b2) * a + (1 - c * a2) * b
    den = 1 + 2 * c * ab + c * c * a2 * b2
    return num / den


def hyperbolic_distance(a, b, cfg=CurvatureConfig()):
    """Geodesic distance ``2/sqrt(c) * artanh(sqrt(c) * ||a (+) (-b)||)``."""
    a = _as_points(a, cfg, "a")
    b = _as_points(b, cfg, "b")
    diff = mobius_add(a, -b, cfg)
    u = cfg.sqrt_c * np.linalg.norm(diff, axis=-1)
    # a (+) (-a) cancels only up to rounding; coincident points are exactly 0 apart
    u = np.where(np.all(a == b, axis=-1), 0.0, u)
    # rounding can push u to 1 for points hugging the boundary
    u = np.minimum(u, 1 - 1e-16)
    return 2.0 / cfg.sqrt_c * artanh(u)


def _keep_precision(u):
    u = np.asarray(u)
    return u if u.dtype == np.longdouble else u.astype(np.float64, copy=False)


def log_scale(u):
    """``artanh(u)/u`` with its removable singularity at 0 filled in."""
    u = _keep_precision(u)
    small = u < _SERIES_CUTOFF
    safe = np.where(small, 0.5, u)
    u2 = u * u
    return np.where(small, 1 + u2 / 3 + u2 * u2 / 5, artanh(safe) / safe)


def log_scale_deriv(u):
    """Derivative of :func:`log_scale` with respect to ``u``."""
    u = _keep_precision(u)
    small = u < _SERIES_CUTOFF
    safe = np.where(small, 0.5, u)
    exact = (safe / (1 - safe * safe) - artanh(safe)) / (safe * safe)
    return np.where(small, 2 * u / 3 + 4 * u**3 / 5, exact)


def log_map_origin(z, cfg=CurvatureConfig()):
    """Logarithmic map at the origin; the origin maps to itself."""
    z = _as_points(z, cfg)
    return _log0(z, cfg)


def _log0(z, cfg):
    u = cfg.sqrt_c * np.linalg.norm(z, axis=-1, keepdims=True)
    return log_scale(u) * z


def project_to_ball(x, cfg=CurvatureConfig()):
    """Radially shrink points on or beyond the boundary to radius ``(1-eps)/sqrt(c)``.

    Points already strictly inside are returned unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project non-finite values")
    return _project(x, cfg)


def _project(x, cfg):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    u = cfg.sqrt_c * norm
    outside = u >= 1.0
    scale = np.where(outside, (1 - cfg.epsilon) / np.where(outside, u, 1.0), 1.0)
    out = scale * x
    # guard against the shrunk norm rounding back onto the boundary
    over = cfg.c * np.sum(out * out, axis=-1, keepdims=True) >= 1.0
    if np.any(over):
        out = np.where(over, out * (1 - cfg.epsilon), out)
    return out


def tangent_embed(x, cfg=CurvatureConfig()):
    """``log_map_origin(project_to_ball(x))`` applied row-wise."""
    return _log0(project_to_ball(x, cfg), cfg)
