"""SC-FC coupling graph: cosine-similarity adjacency between the two embeddings."""

import numpy as np

from . import autodiff as ad
from .graphs import ConnectivityGraph
from .layers import encode_graph


def _row_normalize(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def _check_pair(xf, xs, same_width):
    xf = np.asarray(xf, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if xf.ndim != 2 or xs.ndim != 2:
        raise ValueError("embeddings must be N x M matrices")
    if xf.shape[0] != xs.shape[0]:
        raise ValueError(f"row counts differ: {xf.shape[0]} vs {xs.shape[0]}")
    if same_width and xf.shape[1] != xs.shape[1]:
        raise ValueError(f"embedding widths differ: {xf.shape[1]} vs {xs.shape[1]}")
    return xf, xs


def coupling_adjacency(xf, xs):
    """``A_C[i, j]`` = cosine similarity of FC row ``i`` and SC row ``j``."""
    xf, xs = _check_pair(xf, xs, same_width=True)
    return _row_normalize(xf) @ _row_normalize(xs).T


def coupling_features(xf, xs):
    xf, xs = _check_pair(xf, xs, same_width=False)
    return np.hstack([_row_normalize(xf), _row_normalize(xs)])


def conv_weights(a_c):
    """Nonnegative symmetric weights for a convolution-style second stage."""
    a_c = np.asarray(a_c, dtype=np.float64)
    return ((a_c + a_c.T) / 2 + 1) / 2


def coupling_graph(xf, xs):
    """The raw coupling graph (signed, generally asymmetric adjacency)."""
    return ConnectivityGraph(coupling_adjacency(xf, xs), coupling_features(xf, xs), "coupling")


def couple_and_encode(xf, xs, spec, params, prefix="coupling"):
    """Build the coupling graph and run the second-stage encoder on it.

    Convolution kinds use ``((A_C + A_C^T)/2 + 1)/2`` before the usual
    normalisation; attention kinds attend over every ROI.
    """
    g = coupling_graph(xf, xs)
    if spec.is_attention:
        adj = np.ones_like(g.adjacency)
    else:
        adj = conv_weights(g.adjacency)
    return encode_graph(ConnectivityGraph(adj, g.features, "coupling"), spec, params, prefix)


def coupling_tensor(xf, xs, spec):
    """Differentiable coupling inputs ``(adjacency, features)`` for :func:`encode_tensor`.

    Accepts batched embeddings ``(..., N, M)``.
    """
    nf = ad.row_normalize(xf)
    ns = ad.row_normalize(xs)
    features = ad.concat([nf, ns])
    n = features.shape[-2]
    if spec.is_attention:
        return np.ones((n, n), dtype=bool), features
    a_c = nf @ ad.transpose(ns)
    sym = (a_c + ad.transpose(a_c)) * 0.5
    weights = (sym + 1.0) * 0.5
    return ad.sym_normalize_adjacency(weights), features
