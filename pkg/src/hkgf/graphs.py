"""Connectivity graph construction and a synthetic two-class cohort."""

import math
from dataclasses import dataclass, field

import numpy as np

MODALITIES = ("fc", "sc", "asl", "coupling")


@dataclass
class ConnectivityGraph:
    """One subject's network: weighted adjacency plus per-node features."""

    adjacency: np.ndarray
    features: np.ndarray
    modality: str

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}; expected one of {MODALITIES}")
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != a.shape[0]:
            raise ValueError(
                f"features must have {a.shape[0]} rows, got shape {self.features.shape}"
            )

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]


@dataclass
class Subject:
    id: str
    graphs: dict = field(default_factory=dict)
    label: int = 0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"subject {self.id}: label must be 0 or 1, got {self.label!r}")
        sizes = {g.n_nodes for g in self.graphs.values()}
        if len(sizes) > 1:
            raise ValueError(f"subject {self.id}: graphs disagree on node count {sorted(sizes)}")

    @property
    def n_rois(self):
        return next(iter(self.graphs.values())).n_nodes


def pearson(x, y):
    """Pearson correlation; 0 when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise ValueError("pearson needs at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return 0.0
    return float(np.clip(dx @ dy / denom, -1.0, 1.0))


def correlation_matrix(ts):
    """Row-wise Pearson matrix of an ``N x T`` series block (flat rows correlate as 0)."""
    ts = np.asarray(ts, dtype=np.float64)
    if ts.ndim != 2 or ts.shape[0] < 2 or ts.shape[1] < 3:
        raise ValueError(f"time series must be N x T with N >= 2, T >= 3; got {ts.shape}")
    centered = ts - ts.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    unit = np.divide(centered, norms[:, None], out=np.zeros_like(centered), where=norms[:, None] > 0)
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def sparsify(weights, keep_fraction=0.5, binary=False):
    """Keep the strongest ``ceil(keep_fraction * pairs)`` off-diagonal pairs by |weight|.

    Ties go to the lexicographically smallest ``(i, j)``.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    n_keep = math.ceil(keep_fraction * iu.size)
    order = np.lexsort((ju, iu, -np.abs(w[iu, ju])))[:n_keep]
    out = np.zeros_like(w)
    vals = np.ones(n_keep) if binary else w[iu[order], ju[order]]
    out[iu[order], ju[order]] = vals
    out[ju[order], iu[order]] = vals
    return out


def fc_graph_from_correlation(corr, keep_fraction=0.5, binary=False):
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation matrix must be square, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-10):
        raise ValueError("correlation matrix must be symmetric")
    return ConnectivityGraph(sparsify(corr, keep_fraction, binary), corr.copy(), "fc")


def build_fc_graph(ts, keep_fraction=0.5, binary=False):
    """FC graph from ROI time series: features are the full correlation matrix."""
    return fc_graph_from_correlation(correlation_matrix(ts), keep_fraction, binary)


def build_sc_graph(fn, fa, fl):
    """SC graph: node features ``[FN | FA | FL]``, edge weight ``FN + FA + FL``."""
    mats = []
    for name, m in (("FN", fn), ("FA", fa), ("FL", fl)):
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"{name} must be square, got shape {m.shape}")
        if np.any(m < 0):
            raise ValueError(f"{name} has negative entries")
        mats.append(m)
    if len({m.shape for m in mats}) != 1:
        raise ValueError(f"FN/FA/FL shapes differ: {[m.shape for m in mats]}")
    return ConnectivityGraph(mats[0] + mats[1] + mats[2], np.hstack(mats), "sc")


def normalize_adjacency(a):
    """Symmetric renormalisation with self-loops, ``D^-1/2 (A + I) D^-1/2``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if np.any(a < 0):
        raise ValueError("normalize_adjacency needs nonnegative weights")
    looped = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(looped.sum(axis=1))
    return looped * d[:, None] * d[None, :]


# Synthetic cohort ----------------------------------------------------------

# (within module, within super-module, across super-modules)
_FC_BLOCKS = (0.55, 0.25, 0.05)
_FN_BLOCKS = (0.8, 0.4, 0.1)
_FA_BLOCKS = (0.45, 0.4, 0.35)
_FL_BLOCKS = (0.3, 0.5, 0.7)
_FC_NOISE = 0.1
_FN_NOISE = 0.1
_FA_NOISE = 0.03
_FL_NOISE = 0.03


def roi_modules(n_rois, n_modules=4):
    """Module and super-module index of every ROI (modules pair up into super-modules)."""
    module = np.arange(n_rois) * n_modules // n_rois
    return module, module // 2


def perturbed_edges(n_rois):
    """Boolean mask of the inter-module block shifted in the positive class."""
    module, _ = roi_modules(n_rois)
    mask = np.outer(module == 0, module == 2)
    return mask | mask.T


def _block_matrix(n_rois, levels):
    module, sup = roi_modules(n_rois)
    same_mod = module[:, None] == module[None, :]
    same_sup = sup[:, None] == sup[None, :]
    return np.where(same_mod, levels[0], np.where(same_sup, levels[1], levels[2]))


def _sym_noise(rng, n, scale):
    e = rng.normal(0.0, scale, size=(n, n))
    e = np.triu(e, 1)
    return e + e.T


def generate_synthetic_cohort(n_subjects=200, n_rois=32, effect=1.0, seed=0):
    """Balanced two-class cohort with paired FC and SC graphs.

    Every subject draws its connectivity from a two-level block model (four
    modules nested in two super-modules) plus symmetric Gaussian edge noise.
    Subjects in class 1 additionally have the edges between module 0 and
    module 2 raised by ``effect`` noise standard deviations, in both modalities.
    Subjects alternate labels 0, 1, 0, ...
    """
    if n_subjects < 2 or n_subjects % 2:
        raise ValueError(f"n_subjects must be even and >= 2, got {n_subjects}")
    if n_rois < 8:
        raise ValueError(f"n_rois must be >= 8, got {n_rois}")
    if effect < 0:
        raise ValueError(f"effect must be >= 0, got {effect}")

    rng = np.random.default_rng(seed)
    shift = perturbed_edges(n_rois).astype(np.float64)
    eye = np.eye(n_rois, dtype=bool)
    fc_base = _block_matrix(n_rois, _FC_BLOCKS)
    fn_base = _block_matrix(n_rois, _FN_BLOCKS)
    fa_base = _block_matrix(n_rois, _FA_BLOCKS)
    fl_base = _block_matrix(n_rois, _FL_BLOCKS)

    subjects = []
    for k in range(n_subjects):
        label = k % 2
        bump = effect * label * shift
        fc = fc_base + _sym_noise(rng, n_rois, _FC_NOISE) + bump * _FC_NOISE
        fc = np.clip(fc, -0.99, 0.99)
        fc[eye] = 1.0
        fn = np.clip(fn_base + _sym_noise(rng, n_rois, _FN_NOISE) + bump * _FN_NOISE, 0, None)
        fa = np.clip(fa_base + _sym_noise(rng, n_rois, _FA_NOISE), 0, 1)
        fl = np.clip(fl_base + _sym_noise(rng, n_rois, _FL_NOISE), 0, None)
        for m in (fn, fa, fl):
            m[eye] = 0.0
        subjects.append(
            Subject(
                id=f"sub-{k:04d}",
                graphs={"fc": fc_graph_from_correlation(fc), "sc": build_sc_graph(fn, fa, fl)},
                label=label,
            )
        )
    return subjects
