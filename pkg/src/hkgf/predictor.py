"""Pooling, tangent-space classifier head, and the classification loss."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import row_bias
from .manifold import CurvatureConfig

HNN_LAYERS = ("hidden0", "hidden1", "logits")


@dataclass
class HnnParams:
    """Two hidden transforms then a plain logit layer; weights are ``in x out``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def as_dict(self, prefix="hnn"):
        return {
            f"{prefix}.hidden0.weight": self.w1, f"{prefix}.hidden0.bias": self.b1,
            f"{prefix}.hidden1.weight": self.w2, f"{prefix}.hidden1.bias": self.b2,
            f"{prefix}.logits.weight": self.w_out, f"{prefix}.logits.bias": self.b_out,
        }


def hnn_shapes(in_width, hidden=32, n_classes=2, prefix="hnn"):
    shapes = {}
    widths = (in_width, hidden, hidden, n_classes)
    for name, d, m in zip(HNN_LAYERS, widths[:-1], widths[1:]):
        shapes[f"{prefix}.{name}.weight"] = (d, m)
        shapes[f"{prefix}.{name}.bias"] = (m,)
    return shapes


def average_pool(x_cp):
    """Column means of the fused node features."""
    x_cp = np.asarray(x_cp, dtype=np.float64)
    if x_cp.ndim != 2 or x_cp.shape[0] == 0:
        raise ValueError(f"average_pool needs a non-empty N x M matrix, got shape {x_cp.shape}")
    return x_cp.mean(axis=0)


def hnn_tensor(pooled, params, curvature, prefix="hnn"):
    """Head on pooled rows shaped ``(..., 1, M)``; returns ``(..., 1, 2)`` logits."""
    h = pooled
    for name in HNN_LAYERS[:2]:
        t = ad.tangent_embed(h, curvature.c, curvature.epsilon)
        h = ad.relu(t @ params[f"{prefix}.{name}.weight"] + row_bias(params[f"{prefix}.{name}.bias"]))
    return h @ params[f"{prefix}.logits.weight"] + row_bias(params[f"{prefix}.logits.bias"])


def hnn_forward(x, p, cfg=CurvatureConfig()):
    """Logits for one pooled vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != p.w1.shape[0]:
        raise ValueError(f"input of width {x.shape[-1]} does not match layer width {p.w1.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("hnn_forward needs finite input")
    tensors = {k: ad.Tensor(v) for k, v in p.as_dict().items()}
    return hnn_tensor(x[None, :], tensors, cfg).data[0]


def softmax_cross_entropy(logits, label):
    """Stable log-sum-exp cross-entropy for one logit vector; returns ``(loss, probs)``."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    log_probs = shifted - log_norm
    return float(-log_probs[int(label)]), np.exp(log_probs)
