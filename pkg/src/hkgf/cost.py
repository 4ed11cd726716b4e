"""Parameter and multiply-accumulate (MAC) accounting for graph encoders.

MAC convention, per layer with ``N`` nodes, input width ``D``, per-head
width ``M``, ``K`` heads and ``E`` aggregated entries (``N*N`` unless the
adjacency is given):

* feature transform: ``K * N * D * M``
* attention scores (attention kinds): ``K * E * 2M`` for the score dot
  products, plus ``2 * K * E`` for LeakyReLU and softmax (one op per entry)
* aggregation: ``K * E * M``
* bias add (when present) and output activation: one op per output entry
* hyperbolic kinds add one op per input entry for the ball projection and
  one for the log map (the input is embedded once, shared by all heads),
  and one op per output entry for the cosine and one for the scaled add.
"""

from dataclasses import dataclass, field

import numpy as np

from .layers import EncoderSpec

CONVENTION = (
    "transform K*N*D*M; scores K*E*2M + 2*K*E; aggregation K*E*M; "
    "bias/activation 1 per output entry; hyperbolic: +2 per input entry, +2 per output entry"
)

# Encoder settings of the published cost comparison: one fMRI graph
# (116 ROIs, correlation-row features) and one DTI graph (three stacked
# 116-wide fiber matrices), two layers of width 64, attention heads (4, 1).
N_ROIS = 116
TABLE_INPUTS = {"fMRI": N_ROIS, "DTI": 3 * N_ROIS}
PUBLISHED = {
    # method: {modality: (Param K, MMac)}
    "GCN": {"fMRI": (11.65, 6.16), "DTI": (26.50, 9.61)},
    "HGCN": {"fMRI": (11.65, 8.95), "DTI": (26.50, 15.84)},
    "HKGCN": {"fMRI": (11.65, 6.22), "DTI": (26.50, 9.67)},
    "GAT": {"fMRI": (46.72, 198.22), "DTI": (106.11, 273.14)},
    "HKGAT": {"fMRI": (46.72, 198.89), "DTI": (106.11, 273.82)},
}


def table_spec(kind, d_in):
    heads = (4, 1) if kind in ("gat", "hkgat") else None
    return EncoderSpec(kind=kind, dims=(d_in, 64, 64), heads=heads)


def count_params(spec):
    """Trainable scalars of an encoder, counted layer by layer in closed form."""
    total = 0
    for k in range(spec.n_layers):
        d, m, h = spec.in_width(k), spec.dims[k + 1], spec.heads[k]
        per_head = d * m + (2 * m if spec.is_attention else 0) + (m if spec.bias else 0)
        total += h * per_head
    return total


@dataclass
class CostReport:
    params: int
    macs: int
    breakdown: list = field(default_factory=list)
    convention: str = CONVENTION

    def __post_init__(self):
        if self.breakdown:
            if sum(row["params"] for row in self.breakdown) != self.params:
                raise ValueError("parameter breakdown does not sum to the total")
            if sum(row["macs"] for row in self.breakdown) != self.macs:
                raise ValueError("MAC breakdown does not sum to the total")


def _edge_count(n_nodes, adjacency):
    if adjacency is None:
        return n_nodes * n_nodes
    a = np.asarray(adjacency)
    if a.shape != (n_nodes, n_nodes):
        raise ValueError(f"adjacency must be {n_nodes} x {n_nodes}, got {a.shape}")
    # self-loops are always aggregated
    return int(np.count_nonzero((a != 0) | np.eye(n_nodes, dtype=bool)))


def layer_costs(spec, n_nodes, adjacency=None):
    """Per-layer rows ``{layer, params, transform, scores, aggregation, pointwise,
    hyperbolic, macs}``."""
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be positive, got {n_nodes}")
    e = _edge_count(n_nodes, adjacency)
    rows = []
    for k in range(spec.n_layers):
        d, m, h = spec.in_width(k), spec.dims[k + 1], spec.heads[k]
        out_entries = h * n_nodes * m
        row = {
            "layer": k,
            "params": count_params(EncoderSpec(spec.kind, (d, m), (h,), bias=spec.bias)),
            "transform": h * n_nodes * d * m,
            "scores": h * e * 2 * m + 2 * h * e if spec.is_attention else 0,
            "aggregation": h * e * m,
            "pointwise": out_entries * (2 if spec.bias else 1),
            "hyperbolic": 2 * n_nodes * d + 2 * out_entries if spec.is_hyperbolic else 0,
        }
        row["macs"] = sum(row[key] for key in ("transform", "scores", "aggregation",
                                               "pointwise", "hyperbolic"))
        rows.append(row)
    return rows


def count_macs(spec, n_nodes, adjacency=None):
    """MACs of one forward encoding of an ``n_nodes`` graph (dense unless
    ``adjacency`` is given)."""
    return sum(row["macs"] for row in layer_costs(spec, n_nodes, adjacency))


def cost_report(spec, n_nodes, adjacency=None):
    rows = layer_costs(spec, n_nodes, adjacency)
    return CostReport(count_params(spec), sum(r["macs"] for r in rows), rows)


def cost_table():
    """Rows ``(method, modality, params, macs, published_params_k, published_mmac)``.

    HGCN is listed with its published figures only (``params``/``macs`` None):
    its Mobius-operation costs are not modelled here.
    """
    rows = []
    for method, published in PUBLISHED.items():
        for modality, d_in in TABLE_INPUTS.items():
            pk, pm = published[modality]
            if method == "HGCN":
                rows.append((method, modality, None, None, pk, pm))
                continue
            spec = table_spec(method.lower(), d_in)
            rows.append((method, modality, count_params(spec), count_macs(spec, N_ROIS), pk, pm))
    return rows


def format_cost_table(rows=None):
    rows = cost_table() if rows is None else rows
    lines = [
        f"{'Method':<8} | {'fMRI Param (K)':>14} {'MMac':>8} | {'DTI Param (K)':>13} {'MMac':>8}"
        f" | {'published fMRI':>16} | {'published DTI':>16}",
    ]
    by_method = {}
    for method, modality, params, macs, pk, pm in rows:
        by_method.setdefault(method, {})[modality] = (params, macs, pk, pm)
    for method, cols in by_method.items():
        cells, refs = [], []
        for modality in TABLE_INPUTS:
            params, macs, pk, pm = cols[modality]
            if params is None:
                cells.append(f"{'ref only':>{14 if modality == 'fMRI' else 13}} {'-':>8}")
            else:
                width = 14 if modality == "fMRI" else 13
                cells.append(f"{params / 1000:>{width}.2f} {macs / 1e6:>8.2f}")
            refs.append(f"{pk:>7.2f} K {pm:>6.2f}")
        lines.append(f"{method:<8} | {cells[0]} | {cells[1]} | {refs[0]:>16} | {refs[1]:>16}")
    lines.append(f"MAC convention: {CONVENTION}")
    return "\n".join(lines)
