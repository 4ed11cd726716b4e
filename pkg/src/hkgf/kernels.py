"""Hyperbolic arc-cos (HAC) and hyperbolic RBF (HRBF) kernels.

Both kernels compare points through their images under the logarithmic map at
the origin. Random-feature maps give finite-dimensional approximations; the
Monte-Carlo oracle and closed forms here are kept independent of those maps so
they can check them.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .manifold import CurvatureConfig, log_map_origin

ACTIVATIONS = ("relu", "cosine")


@dataclass(frozen=True)
class KernelConfig:
    curvature: CurvatureConfig = CurvatureConfig()
    sigma: float = 1.0
    feature_count: int = 256

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.feature_count) < 1:
            raise ValueError(f"feature_count must be >= 1, got {self.feature_count}")


@dataclass(frozen=True)
class RandomFeatureMap:
    """Frozen projection ``W`` (D x M), offsets ``b`` (M) and activation."""

    weights: np.ndarray
    offsets: np.ndarray
    activation: str
    seed: int

    @property
    def dim(self):
        return self.weights.shape[0]

    @property
    def n_features(self):
        return self.weights.shape[1]


def _check_activation(activation):
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")


def sample_feature_map(dim, cfg=KernelConfig(), activation="cosine", seed=0, offset=0.0):
    """Draw ``W ~ N(0, sigma^2 I)``.

    Offsets are ``Uniform[0, 2pi)`` for the cosine map and the constant
    ``offset`` (default 0) for the ReLU map.
    """
    _check_activation(activation)
    if int(dim) < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    m = int(cfg.feature_count)
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, cfg.sigma, size=(int(dim), m))
    if activation == "cosine":
        offsets = rng.uniform(0.0, 2 * np.pi, size=m)
    else:
        offsets = np.full(m, float(offset))
    weights.setflags(write=False)
    offsets.setflags(write=False)
    return RandomFeatureMap(weights, offsets, activation, int(seed))


def _activate(pre, activation):
    return np.maximum(pre, 0.0) if activation == "relu" else np.cos(pre)


def kernel_features(z, fmap, cfg=KernelConfig()):
    """``sqrt(2/M) * act(W^T log0(z) + b)`` for a point or a stack of points."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != fmap.dim:
        raise ValueError(f"point dimension {z.shape[-1]} does not match map dimension {fmap.dim}")
    u = log_map_origin(z, cfg.curvature)
    pre = u @ fmap.weights + fmap.offsets
    return np.sqrt(2.0 / fmap.n_features) * _activate(pre, fmap.activation)


def kernel_estimate(a, b, fmap, cfg=KernelConfig(), fmap_b=None):
    """Inner product of the two points' random features (one shared map)."""
    if fmap_b is not None and fmap_b is not fmap:
        same = (
            fmap_b.activation == fmap.activation
            and np.array_equal(fmap_b.weights, fmap.weights)
            and np.array_equal(fmap_b.offsets, fmap.offsets)
        )
        if not same:
            raise ValueError("kernel_estimate needs both points mapped by the same feature map")
    fa = kernel_features(a, fmap, cfg)
    fb = kernel_features(b, fmap, cfg)
    return np.sum(fa * fb, axis=-1)


def mc_kernel_oracle(a, b, cfg=KernelConfig(), activation="cosine", samples=1_000_000,
                     seed=12345, offset=0.0, chunk=100_000):
    """Plain Monte-Carlo estimate of the defining kernel integral.

    HAC: ``2 E_w[relu(w.u + offset) relu(w.v + offset)]``.
    HRBF: ``E_w[cos(w.(u - v))]``, the real part of the Fourier integral.
    ``u, v`` are the tangent images of ``a, b``; ``w ~ N(0, sigma^2 I)``.
    """
    _check_activation(activation)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    u = log_map_origin(a, cfg.curvature)
    v = log_map_origin(b, cfg.curvature)
    rng = np.random.default_rng(seed)
    acc = 0.0
    left = int(samples)
    while left > 0:
        n = min(chunk, left)
        w = rng.normal(0.0, cfg.sigma, size=(n, u.shape[-1]))
        if activation == "relu":
            vals = 2.0 * np.maximum(w @ u + offset, 0) * np.maximum(w @ v + offset, 0)
        else:
            vals = np.cos(w @ (u - v))
        acc += float(vals.sum())
        left -= n
    return acc / samples


def hrbf_closed_form(a, b, cfg=KernelConfig()):
    """``exp(-sigma^2 ||log0(a) - log0(b)||^2 / 2)``."""
    d = log_map_origin(a, cfg.curvature) - log_map_origin(b, cfg.curvature)
    return np.exp(-(cfg.sigma**2) * np.sum(d * d, axis=-1) / 2.0)


def hac_closed_form(a, b, cfg=KernelConfig()):
    """First-order arc-cos kernel on tangent images (zero offsets).

    ``sigma^2 ||u|| ||v|| (sin t + (pi - t) cos t) / pi`` with ``t`` the angle
    between ``u`` and ``v``.
    """
    u = log_map_origin(a, cfg.curvature)
    v = log_map_origin(b, cfg.curvature)
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    denom = np.where(nu * nv > 0, nu * nv, 1.0)
    cos_t = np.clip(np.sum(u * v, axis=-1) / denom, -1.0, 1.0)
    t = np.arccos(cos_t)
    return cfg.sigma**2 * nu * nv * (np.sin(t) + (np.pi - t) * cos_t) / np.pi


KERNELS = {"hrbf": "cosine", "hac": "relu"}


def random_ball_pairs(n_pairs, dim, seed=0, cfg=KernelConfig()):
    """Point pairs drawn from ``N(0, I/dim)`` (norm about 1) and projected into the ball."""
    from .manifold import project_to_ball

    rng = np.random.default_rng(seed)
    pts = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(2, int(n_pairs), int(dim)))
    pts = project_to_ball(pts, cfg.curvature)
    return pts[0], pts[1]


def kernel_convergence(kernel="hrbf", feature_counts=(64, 256, 1024, 4096), n_pairs=50, dim=16,
                       seed=0, cfg=KernelConfig(), oracle_samples=1_000_000):
    """Mean absolute error of random-feature estimates against the reference.

    The reference is the closed form for ``hrbf`` and :func:`mc_kernel_oracle`
    for ``hac``. Returns ``[(M, mean_abs_error), ...]``; one feature map per
    ``M`` (seeded from ``seed`` and ``M``) is shared by all pairs.
    """
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {sorted(KERNELS)}, got {kernel!r}")
    activation = KERNELS[kernel]
    a, b = random_ball_pairs(n_pairs, dim, seed, cfg)
    if kernel == "hrbf":
        reference = hrbf_closed_form(a, b, cfg)
    else:
        reference = np.array([mc_kernel_oracle(x, y, cfg, "relu", samples=oracle_samples,
                                               seed=seed + 1 + i)
                              for i, (x, y) in enumerate(zip(a, b))])
    rows = []
    for m in feature_counts:
        fmap = sample_feature_map(dim, KernelConfig(cfg.curvature, cfg.sigma, int(m)), activation,
                                  seed=int(np.random.SeedSequence([seed, int(m)]).generate_state(1)[0]))
        est = kernel_estimate(a, b, fmap, cfg)
        rows.append((int(m), float(np.mean(np.abs(est - reference)))))
    return rows


class HyperbolicRandomFeatures(TransformerMixin, BaseEstimator):
    """Random-feature embedding of ball points, usable inside sklearn pipelines.

    ``kernel="hrbf"`` gives cosine features, ``kernel="hac"`` ReLU features.
    Rows of ``X`` must lie inside the ball of curvature ``-c``.
    """

    def __init__(self, kernel="hrbf", n_features=256, sigma=1.0, c=1e-3, random_state=0):
        self.kernel = kernel
        self.n_features = n_features
        self.sigma = sigma
        self.c = c
        self.random_state = random_state

    def _config(self):
        return KernelConfig(CurvatureConfig(self.c), self.sigma, self.n_features)

    def fit(self, X, y=None):
        X = check_array(X)
        if self.kernel not in ("hrbf", "hac"):
            raise ValueError(f"kernel must be 'hrbf' or 'hac', got {self.kernel!r}")
        activation = "cosine" if self.kernel == "hrbf" else "relu"
        self.feature_map_ = sample_feature_map(X.shape[1], self._config(), activation,
                                               self.random_state)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_map_")
        X = check_array(X)
        return kernel_features(X, self.feature_map_, self._config())
