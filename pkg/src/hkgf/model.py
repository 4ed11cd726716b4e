"""Full fusion pipeline: two graph encoders, coupling stage, pooled classifier head."""

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .fusion import coupling_tensor
from .layers import KINDS, EncoderSpec, encode_tensor, init_encoder_params, prepare_adjacency
from .manifold import CurvatureConfig
from .predictor import hnn_shapes, hnn_tensor


class MissingModalityError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of the whole classifier.

    Defaults: two layers of width 64 per stage, ``lam = 0.01``, ``c = 1e-3``,
    attention heads ``(4, 1)`` for attention backbones, head width 32.
    """

    backbone: str = "hkgcn"
    n_rois: int = 116
    fc_dim: int = None
    sc_dim: int = None
    hidden: int = 64
    n_layers: int = 2
    heads: tuple = (4, 1)
    lam: float = 0.01
    c: float = 1e-3
    epsilon: float = 1e-5
    hnn_hidden: int = 32
    attention_bias: bool = False
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.backbone not in KINDS:
            raise ValueError(f"backbone must be one of {KINDS}, got {self.backbone!r}")
        if self.n_rois < 1 or self.hidden < 1 or self.n_layers < 1 or self.hnn_hidden < 1:
            raise ValueError("n_rois, hidden, n_layers and hnn_hidden must be positive")
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        if self.fc_dim is None:
            object.__setattr__(self, "fc_dim", self.n_rois)
        if self.sc_dim is None:
            object.__setattr__(self, "sc_dim", 3 * self.n_rois)
        # fail early on bad combinations
        self.encoder("fc")

    @property
    def is_attention(self):
        return self.backbone in ("hkgat", "gat")

    @property
    def curvature(self):
        return CurvatureConfig(self.c, self.epsilon)

    def _heads(self):
        if not self.is_attention:
            return None
        if len(self.heads) != self.n_layers:
            raise ValueError(f"heads {self.heads} must list one count per layer ({self.n_layers})")
        return self.heads

    def encoder(self, stage):
        """EncoderSpec for ``"fc"``, ``"sc"`` or ``"coupling"``."""
        widths = (self.hidden,) * self.n_layers
        if stage == "fc":
            d_in = self.fc_dim
        elif stage == "sc":
            d_in = self.sc_dim
        elif stage == "coupling":
            d_in = 2 * self.encoder("fc").out_width
        else:
            raise ValueError(f"unknown stage {stage!r}")
        return EncoderSpec(
            kind=self.backbone, dims=(d_in,) + widths, heads=self._heads(), lam=self.lam,
            c=self.c, epsilon=self.epsilon,
            bias=self.attention_bias if self.is_attention else True,
            leaky_slope=self.leaky_slope,
        )

    def param_shapes(self):
        shapes = {}
        for stage in ("fc", "sc", "coupling"):
            shapes.update(self.encoder(stage).param_shapes(stage))
        shapes.update(hnn_shapes(self.encoder("coupling").out_width, self.hnn_hidden))
        return shapes

    def to_dict(self):
        d = asdict(self)
        d["heads"] = list(self.heads)
        return d


def init_params(spec, seed=0):
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for stage in ("fc", "sc", "coupling"):
        params.update(init_encoder_params(spec.encoder(stage), rng, stage))
    for name, shape in hnn_shapes(spec.encoder("coupling").out_width, spec.hnn_hidden).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


@dataclass
class Inputs:
    """Stacked, pre-processed graph inputs for a group of subjects."""

    fc_adj: np.ndarray
    fc_x: np.ndarray
    sc_adj: np.ndarray
    sc_x: np.ndarray
    labels: np.ndarray
    ids: list

    def __len__(self):
        return len(self.labels)

    def take(self, idx):
        idx = np.asarray(idx)
        return Inputs(self.fc_adj[idx], self.fc_x[idx], self.sc_adj[idx], self.sc_x[idx],
                      self.labels[idx], [self.ids[i] for i in idx])


def prepare_inputs(subjects, spec):
    """Validate modalities/widths and stack every subject's graphs."""
    if len(subjects) == 0:
        raise ValueError("no subjects given")
    fc_spec, sc_spec = spec.encoder("fc"), spec.encoder("sc")
    stacks = {"fc_adj": [], "fc_x": [], "sc_adj": [], "sc_x": []}
    for s in subjects:
        for modality, enc in (("fc", fc_spec), ("sc", sc_spec)):
            g = s.graphs.get(modality)
            if g is None:
                raise MissingModalityError(f"subject {s.id} has no {modality} graph")
            if g.n_nodes != spec.n_rois:
                raise ValueError(f"subject {s.id}: {modality} graph has {g.n_nodes} nodes, "
                                 f"model expects {spec.n_rois}")
            if g.features.shape[1] != enc.dims[0]:
                raise ValueError(f"subject {s.id}: {modality} features have width "
                                 f"{g.features.shape[1]}, model expects {enc.dims[0]}")
            stacks[f"{modality}_adj"].append(prepare_adjacency(g.adjacency, enc))
            stacks[f"{modality}_x"].append(g.features)
    arrays = {k: np.stack(v) for k, v in stacks.items()}
    labels = np.array([s.label for s in subjects], dtype=np.int64)
    return Inputs(labels=labels, ids=[s.id for s in subjects], **arrays)


def forward_tensor(spec, params, fc_adj, fc_x, sc_adj, sc_x, record=None):
    """Logits ``(..., 2)`` and the fused node features ``(..., N, M')``.

    ``params`` maps names to :class:`~hkgf.autodiff.Tensor`. ``record``, if a
    dict, receives ``"coupling_attention"``: per-layer attention stacks of the
    second stage.
    """
    xf = encode_tensor(fc_adj, fc_x, spec.encoder("fc"), params, "fc")
    xs = encode_tensor(sc_adj, sc_x, spec.encoder("sc"), params, "sc")
    coupling = spec.encoder("coupling")
    adj_c, x_c = coupling_tensor(xf, xs, coupling)
    layers = [] if record is not None else None
    x_cp = encode_tensor(adj_c, x_c, coupling, params, "coupling", record=layers)
    if record is not None:
        record["coupling_attention"] = layers
    pooled = ad.mean(x_cp, axis=-2, keepdims=True)
    logits = hnn_tensor(pooled, params, spec.curvature)
    logits = ad.reshape(logits, logits.shape[:-2] + logits.shape[-1:])
    return logits, x_cp
