"""Graph encoder layers.

``hkgcn`` and ``hkgat`` layers work in the tangent space at the origin: inputs
are projected into the Poincare ball, log-mapped, transformed and aggregated,
then passed through ``f(.) + lam * cos(.)``. The plain ``gcn`` / ``gat``
layers here are written directly in numpy and serve as Euclidean references.
The trainable path (:func:`encode_tensor`) runs on :mod:`hkgf.autodiff`.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import normalize_adjacency
from .manifold import CurvatureConfig

KINDS = ("hkgcn", "hkgat", "gcn", "gat")
ATTENTION_KINDS = ("hkgat", "gat")


@dataclass(frozen=True)
class LayerConfig:
    curvature: CurvatureConfig = CurvatureConfig()
    lam: float = 0.01
    heads: int = 1
    activation: str = "relu"
    elu_alpha: float = 1.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.heads < 1:
            raise ValueError(f"heads must be >= 1, got {self.heads}")
        if self.activation not in ("relu", "elu"):
            raise ValueError(f"activation must be 'relu' or 'elu', got {self.activation!r}")
        if not self.elu_alpha > 0:
            raise ValueError("elu_alpha must be positive")
        if not 0 < self.leaky_slope < 1:
            raise ValueError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")


@dataclass
class DenseLayerParams:
    weight: np.ndarray  # D x M
    bias: np.ndarray  # M


@dataclass
class AttentionLayerParams:
    """Per-head parameters stacked on a leading head axis.

    ``weight`` is ``K x D x M`` (rows are applied as ``x @ W``), ``attention``
    is ``K x 2M`` and ``bias`` is ``K x M`` or ``None``.
    """

    weight: np.ndarray
    attention: np.ndarray
    bias: np.ndarray = None


@dataclass(frozen=True)
class EncoderSpec:
    """A stack of graph layers.

    ``dims = (D_in, M_1, ..., M_L)``; for attention kinds ``M_k`` is the
    per-head width and layer ``k+1`` reads ``heads[k] * M_k`` features.
    ``bias=None`` picks the default: biased dense layers, unbiased attention.
    """

    kind: str = "hkgcn"
    dims: tuple = (116, 64, 64)
    heads: tuple = None
    lam: float = 0.01
    c: float = 1e-3
    epsilon: float = 1e-5
    bias: bool = None
    leaky_slope: float = 0.2
    elu_alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"encoder kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 1 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive integers, got {self.dims}")
        heads = self.heads
        if heads is None:
            heads = (1,) * self.n_layers
        heads = tuple(int(h) for h in heads)
        if len(heads) != self.n_layers:
            raise ValueError(f"need one head count per layer ({self.n_layers}), got {heads}")
        if not self.is_attention and any(h != 1 for h in heads):
            raise ValueError(f"{self.kind} layers are single-head")
        object.__setattr__(self, "heads", heads)
        if self.bias is None:
            object.__setattr__(self, "bias", not self.is_attention)

    @property
    def n_layers(self):
        return len(self.dims) - 1

    @property
    def is_attention(self):
        return self.kind in ATTENTION_KINDS

    @property
    def is_hyperbolic(self):
        return self.kind.startswith("hk")

    @property
    def curvature(self):
        return CurvatureConfig(self.c, self.epsilon)

    def layer_config(self, k):
        return LayerConfig(
            curvature=self.curvature,
            lam=self.lam if self.is_hyperbolic else 0.0,
            heads=self.heads[k],
            activation="elu" if self.is_attention else "relu",
            elu_alpha=self.elu_alpha,
            leaky_slope=self.leaky_slope,
        )

    def in_width(self, k):
        return self.dims[0] if k == 0 else self.heads[k - 1] * self.dims[k]

    @property
    def out_width(self):
        if self.n_layers == 0:
            return self.dims[0]
        return self.heads[-1] * self.dims[-1]

    def param_shapes(self, prefix="enc"):
        """Ordered ``name -> shape`` for every trainable tensor."""
        shapes = {}
        for k in range(self.n_layers):
            d, m, h = self.in_width(k), self.dims[k + 1], self.heads[k]
            base = f"{prefix}.{k}"
            if self.is_attention:
                shapes[f"{base}.weight"] = (h, d, m)
                shapes[f"{base}.attention"] = (h, 2 * m)
                if self.bias:
                    shapes[f"{base}.bias"] = (h, m)
            else:
                shapes[f"{base}.weight"] = (d, m)
                if self.bias:
                    shapes[f"{base}.bias"] = (m,)
        return shapes


def init_encoder_params(spec, rng, prefix="enc"):
    """Glorot-uniform weights and attention vectors, zero biases."""
    params = {}
    for name, shape in spec.param_shapes(prefix).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = (shape[-2], shape[-1]) if name.endswith(".weight") else (shape[-1], 1)
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


# Euclidean reference layers (plain numpy) ----------------------------------


def _with_self_loops(adj_mask):
    mask = np.asarray(adj_mask) != 0
    n = mask.shape[-1]
    return mask | np.eye(n, dtype=bool)


def _elu(x, alpha=1.0):
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def gcn_layer(a_norm, x, p, cfg=LayerConfig()):
    """``relu(A_hat (X W + 1 b^T))``."""
    a_norm = np.asarray(a_norm, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dense(a_norm, x, p)
    h = x @ p.weight
    if p.bias is not None:
        h = h + p.bias
    return np.maximum(a_norm @ h, 0.0)


def gat_layer(adj_mask, x, p, cfg=LayerConfig(activation="elu"), return_attention=False):
    """Standard multi-head GAT: LeakyReLU scores, masked softmax, ELU, concat."""
    x = np.asarray(x, dtype=np.float64)
    mask = _with_self_loops(adj_mask)
    _check_attention(mask, x, p)
    outs, alphas = [], []
    for k in range(p.weight.shape[0]):
        h = x @ p.weight[k]
        if p.bias is not None:
            h = h + p.bias[k]
        m = h.shape[1]
        e = (h @ p.attention[k, :m])[:, None] + (h @ p.attention[k, m:])[None, :]
        e = np.where(e > 0, e, cfg.leaky_slope * e)
        e = np.where(mask, e, -np.inf)
        e = np.exp(e - e.max(axis=1, keepdims=True))
        alpha = e / e.sum(axis=1, keepdims=True)
        outs.append(_elu(alpha @ h, cfg.elu_alpha))
        alphas.append(alpha)
    out = np.concatenate(outs, axis=1)
    return (out, np.stack(alphas)) if return_attention else out


def _check_dense(a, x, p):
    if a.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"adjacency {a.shape} does not match {x.shape[0]} nodes")
    if p.weight.shape[0] != x.shape[1]:
        raise ValueError(f"weight expects {p.weight.shape[0]} input features, got {x.shape[1]}")


def _check_attention(mask, x, p):
    if mask.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"adjacency {mask.shape} does not match {x.shape[0]} nodes")
    if p.weight.ndim != 3 or p.weight.shape[1] != x.shape[1]:
        raise ValueError(f"weight {p.weight.shape} does not accept {x.shape[1]} input features")
    if p.attention.shape != (p.weight.shape[0], 2 * p.weight.shape[2]):
        raise ValueError(f"attention vector shape {p.attention.shape} mismatches weight")


# Tangent-space kernel layers (autodiff) ------------------------------------


def _kernel_activation(agg, cfg):
    if cfg.activation == "relu":
        out = ad.relu(agg)
    else:
        out = ad.elu(agg, cfg.elu_alpha)
    if cfg.lam:
        out = out + ad.cos(agg) * cfg.lam
    return out


def _tangent(x, cfg, hyperbolic):
    if not hyperbolic:
        return ad.as_tensor(x)
    return ad.tangent_embed(x, cfg.curvature.c, cfg.curvature.epsilon)


def row_bias(bias):
    """View a ``(..., M)`` bias as ``(..., 1, M)`` so leading axes never meet the node axis."""
    bias = ad.as_tensor(bias)
    return ad.reshape(bias, bias.shape[:-1] + (1, bias.shape[-1]))


def hkgcn_tensor(a_norm, x, weight, bias, cfg, hyperbolic=True):
    h = _tangent(x, cfg, hyperbolic) @ weight
    if bias is not None:
        h = h + row_bias(bias)
    return _kernel_activation(ad.matmul(a_norm, h), cfg)


def hkgat_tensor(mask, x, weight, attention, bias, cfg, hyperbolic=True, record=None):
    """One multi-head layer; ``mask`` must already include self-loops.

    All heads run in one batched product on a head axis placed before the
    node axis. When ``record`` is a list, the ``(..., K, N, N)`` attention
    array is appended.
    """
    t = _tangent(x, cfg, hyperbolic)
    n_heads, m = weight.shape[-3], weight.shape[-1]
    # (..., K, N, M) head outputs
    u = ad.reshape(t, t.shape[:-2] + (1,) + t.shape[-2:]) @ weight
    if bias is not None:
        u = u + ad.reshape(bias, bias.shape[:-1] + (1, m))
    a_src = ad.index(attention, (Ellipsis, slice(0, m)))
    a_dst = ad.index(attention, (Ellipsis, slice(m, 2 * m)))
    # (..., K, N, 1) + (..., K, 1, N) scores
    src = u @ ad.reshape(a_src, a_src.shape + (1,))
    dst = ad.transpose(u @ ad.reshape(a_dst, a_dst.shape + (1,)))
    e = ad.leaky_relu(src + dst, cfg.leaky_slope)
    mask = np.asarray(mask, dtype=bool)
    alpha = ad.masked_softmax(e, mask.reshape(mask.shape[:-2] + (1,) + mask.shape[-2:]))
    if record is not None:
        record.append(alpha.data)
    out = _kernel_activation(ad.matmul(alpha, u), cfg)
    if n_heads == 1:
        return ad.reshape(out, out.shape[:-3] + out.shape[-2:])
    # heads side by side: (..., N, K * M)
    out = ad.swapaxes(out, -3, -2)
    return ad.reshape(out, out.shape[:-2] + (n_heads * m,))


def _dense_params(p):
    return ad.Tensor(p.weight), None if p.bias is None else ad.Tensor(p.bias)


def hkgcn_layer(a_norm, x, p, cfg=LayerConfig()):
    """Single HKGCN layer on one graph; ``a_norm`` from :func:`normalize_adjacency`."""
    a_norm = np.asarray(a_norm, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dense(a_norm, x, p)
    w, b = _dense_params(p)
    return hkgcn_tensor(a_norm, x, w, b, cfg).data


def hkgat_layer(adj_mask, x, p, cfg=LayerConfig(activation="elu"), return_attention=False):
    """Single multi-head HKGAT layer on one graph (self-loops are added)."""
    x = np.asarray(x, dtype=np.float64)
    mask = _with_self_loops(adj_mask)
    _check_attention(mask, x, p)
    record = []
    bias = None if p.bias is None else ad.Tensor(p.bias)
    out = hkgat_tensor(mask, x, ad.Tensor(p.weight), ad.Tensor(p.attention), bias, cfg,
                       record=record).data
    return (out, record[0]) if return_attention else out


# Encoder stacks ------------------------------------------------------------


def prepare_adjacency(adjacency, spec):
    """Normalised |A| for convolution kinds, boolean neighbourhood mask for attention kinds."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if spec.is_attention:
        return _with_self_loops(adjacency)
    if adjacency.ndim == 2:
        return normalize_adjacency(np.abs(adjacency))
    return np.stack([normalize_adjacency(np.abs(a)) for a in adjacency])


def encode_tensor(adj, x, spec, params, prefix="enc", record=None):
    """Run the stack on (batched) inputs; ``params`` maps names to tensors.

    ``adj`` is whatever :func:`prepare_adjacency` returns (or an equivalent
    tensor). ``record``, if a list, collects per-layer attention stacks.
    """
    out = x
    for k in range(spec.n_layers):
        cfg = spec.layer_config(k)
        base = f"{prefix}.{k}"
        width = out.shape[-1]
        if width != spec.in_width(k):
            raise ValueError(f"layer {k}: expected {spec.in_width(k)} input features, got {width}")
        bias = params.get(f"{base}.bias")
        if spec.is_attention:
            heads = [] if record is not None else None
            out = hkgat_tensor(adj, out, params[f"{base}.weight"], params[f"{base}.attention"],
                               bias, cfg, hyperbolic=spec.is_hyperbolic, record=heads)
            if record is not None:
                record.extend(heads)
        else:
            out = hkgcn_tensor(adj, out, params[f"{base}.weight"], bias, cfg,
                               hyperbolic=spec.is_hyperbolic)
    return ad.as_tensor(out)


def encode_graph(g, spec, params, prefix="enc"):
    """Encode one :class:`ConnectivityGraph` with numpy parameters.

    ``gcn``/``gat`` specs go through the plain numpy reference layers.
    """
    x = g.features
    if x.shape[1] != spec.dims[0]:
        raise ValueError(f"layer 0: expected {spec.dims[0]} input features, got {x.shape[1]}")
    for name, shape in spec.param_shapes(prefix).items():
        if name not in params or np.shape(params[name]) != shape:
            got = None if name not in params else np.shape(params[name])
            raise ValueError(f"parameter {name}: expected shape {shape}, got {got}")
    if spec.is_hyperbolic:
        tensors = {k: ad.Tensor(v) for k, v in params.items()}
        return encode_tensor(prepare_adjacency(g.adjacency, spec), x, spec, tensors, prefix).data
    adj = prepare_adjacency(g.adjacency, spec)
    for k in range(spec.n_layers):
        cfg = spec.layer_config(k)
        base = f"{prefix}.{k}"
        if spec.is_attention:
            p = AttentionLayerParams(params[f"{base}.weight"], params[f"{base}.attention"],
                                     params.get(f"{base}.bias"))
            x = gat_layer(adj, x, p, cfg)
        else:
            x = gcn_layer(adj, x, DenseLayerParams(params[f"{base}.weight"],
                                                   params.get(f"{base}.bias")), cfg)
    return x
