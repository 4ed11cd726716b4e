"""Independent Euclidean assembly of the fusion pipeline from the numpy reference layers."""

from dataclasses import replace

import numpy as np

from hkgf import autodiff as ad
from hkgf.fusion import couple_and_encode
from hkgf.layers import encode_graph
from hkgf.model import forward_tensor, prepare_inputs

EUCLIDEAN = {"hkgcn": "gcn", "hkgat": "gat", "gcn": "gcn", "gat": "gat"}


def euclidean_logits(spec, params, subject):
    """GCN/GAT encoders, coupling stage and a plain ReLU MLP head, all in numpy."""
    kind = EUCLIDEAN[spec.backbone]
    enc = {stage: replace(spec.encoder(stage), kind=kind) for stage in ("fc", "sc", "coupling")}
    xf = encode_graph(subject.graphs["fc"], enc["fc"], params, "fc")
    xs = encode_graph(subject.graphs["sc"], enc["sc"], params, "sc")
    x_cp = couple_and_encode(xf, xs, enc["coupling"], params, "coupling")
    h = x_cp.mean(axis=0)
    for name in ("hidden0", "hidden1"):
        h = np.maximum(h @ params[f"hnn.{name}.weight"] + params[f"hnn.{name}.bias"], 0)
    return h @ params["hnn.logits.weight"] + params["hnn.logits.bias"]


def model_logits(spec, params, subjects):
    """Logits of the trainable (tangent-space) pipeline for a batch of subjects."""
    inputs = prepare_inputs(subjects, spec)
    tensors = {k: ad.Tensor(v) for k, v in params.items()}
    logits, _ = forward_tensor(spec, tensors, inputs.fc_adj, inputs.fc_x, inputs.sc_adj,
                               inputs.sc_x)
    return logits.data
