"""Gradients, Adam, the training loop, finite-difference checking and checkpoints."""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .graphs import Subject
from .model import Inputs, ModelSpec, forward_tensor, init_params, prepare_inputs

CHECKPOINT_MAGIC = b"HKGFCKPT"


class NumericalError(ArithmeticError):
    """Non-finite values in a gradient or loss."""


class ParameterStore:
    """Ordered named parameter arrays with same-shape gradient buffers."""

    def __init__(self, params=None, seed=0):
        self.params = {}
        self.grads = {}
        self.seed = seed
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    @property
    def names(self):
        return list(self.params)

    def n_scalars(self):
        return int(sum(v.size for v in self.params.values()))

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def tensors(self):
        return {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in self.params.items()}

    def copy(self):
        return ParameterStore({k: v.copy() for k, v in self.params.items()}, self.seed)

    def import_weights(self, arrays, strict=False):
        """Load every name-matching array; returns the names loaded.

        Shape mismatches always raise. With ``strict`` unknown or missing names
        raise too.
        """
        loaded = []
        for name, value in arrays.items():
            if name not in self.params:
                if strict:
                    raise KeyError(f"unknown parameter {name!r}")
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self.params[name].shape:
                raise ValueError(f"{name}: shape {value.shape} does not match "
                                 f"{self.params[name].shape}")
            self.params[name][...] = value
            loaded.append(name)
        if strict and len(loaded) != len(self.params):
            missing = sorted(set(self.params) - set(loaded))
            raise KeyError(f"checkpoint lacks parameters {missing}")
        return loaded


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class HKGFModel:
    spec: ModelSpec
    store: ParameterStore

    @classmethod
    def create(cls, spec, seed=0):
        return cls(spec, ParameterStore(init_params(spec, seed), seed))


def _as_inputs(model, data):
    if isinstance(data, Inputs):
        return data
    if isinstance(data, Subject):
        data = [data]
    return prepare_inputs(list(data), model.spec)


def _run(model, inputs, params, record=None):
    logits, x_cp = forward_tensor(model.spec, params, inputs.fc_adj, inputs.fc_x,
                                  inputs.sc_adj, inputs.sc_x, record=record)
    loss, probs = ad.softmax_cross_entropy(logits, inputs.labels)
    return loss, probs, x_cp


def forward(model, data):
    """Mean cross-entropy and class probabilities (rows follow ``data``)."""
    inputs = _as_inputs(model, data)
    params = {k: ad.Tensor(v) for k, v in model.store.params.items()}
    loss, probs, _ = _run(model, inputs, params)
    return float(loss.data), probs


def backward(model, data):
    """Populate ``model.store.grads`` with d(mean loss)/d(param); returns the loss."""
    inputs = _as_inputs(model, data)
    params = model.store.tensors()
    loss, _, _ = _run(model, inputs, params)
    if not np.isfinite(loss.data):
        raise NumericalError(f"loss is not finite ({float(loss.data)})")
    loss.backward()
    for name, t in params.items():
        model.store.grads[name] = np.zeros_like(t.data) if t.grad is None else np.array(t.grad)
    return float(loss.data)


def embed(model, data, record=None):
    """Fused coupling-stage node features ``(S, N, M')`` without gradients."""
    inputs = _as_inputs(model, data)
    params = {k: ad.Tensor(v) for k, v in model.store.params.items()}
    _, _, x_cp = _run(model, inputs, params, record=record)
    return x_cp.data


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store, cfg, state=None):
    """One Adam update with L2-coupled weight decay (``g += wd * theta``)."""
    state = AdamState() if state is None else state
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter {name}")
    state.step += 1
    t = state.step
    for name, theta in store.params.items():
        g = store.grads[name] + cfg.weight_decay * theta
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return state


def train(model, data, cfg=TrainConfig(), log=None):
    """Mini-batch Adam; returns per-epoch mean training loss.

    The shuffle order is drawn from ``cfg.seed`` so a run is reproducible.
    """
    inputs = _as_inputs(model, data)
    n = len(inputs)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = inputs.take(order[start:start + cfg.batch_size])
            loss = backward(model, batch)
            adam_step(model.store, cfg, state)
            total += loss * len(batch)
        history.append(total / n)
        if log is not None:
            log(epoch, history[-1])
    return history


# Finite-difference checking -----------------------------------------------


@dataclass
class TensorCheck:
    name: str
    size: int
    worst_rel_error: float
    checked: int
    excluded: int
    passed: bool


@dataclass
class GradcheckReport:
    tolerance: float
    entries: list

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    @property
    def worst(self):
        return max((e.worst_rel_error for e in self.entries), default=0.0)

    def format(self):
        lines = [f"{'tensor':<24} {'size':>7} {'checked':>7} {'kinked':>6} "
                 f"{'worst rel err':>14}  status"]
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(f"{e.name:<24} {e.size:>7} {e.checked:>7} {e.excluded:>6} "
                         f"{e.worst_rel_error:>14.3e}  {status}")
        return "\n".join(lines)


def _per_copy_loss(model, inputs, params, dtype=np.float64):
    """Loss of every parameter copy on the leading axis, plus relu/leaky inputs seen."""
    arrays = [np.asarray(getattr(inputs, k)[0], dtype=dtype)
              for k in ("fc_adj", "fc_x", "sc_adj", "sc_x")]
    with ad.kink_probe() as kinks:
        logits, _ = forward_tensor(model.spec, params, *arrays)
    z = logits.data
    z = z - z.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return -log_probs[..., int(inputs.labels[0])], kinks


def _flipped(base, perturbed, copies):
    """Per copy: did any relu/leaky unit change side of its kink?"""
    flags = np.zeros(copies, dtype=bool)
    for z0, z in zip(base, perturbed):
        if z.ndim == z0.ndim + 1 and z.shape[1:] == z0.shape:
            flags |= ((z > 0) != (z0 > 0)).reshape(copies, -1).any(axis=1)
    return flags


def _central_differences(model, inputs, name, entries, h, chunk, dtype):
    base = {k: ad.Tensor(np.asarray(v, dtype=dtype)) for k, v in model.store.params.items()}
    _, base_kinks = _per_copy_loss(model, inputs, base, dtype)
    theta = model.store.params[name]
    flat = theta.ravel().astype(dtype)
    out = np.empty(entries.size)
    kinked = np.zeros(entries.size, dtype=bool)
    for start in range(0, entries.size, chunk):
        pos = np.arange(start, min(start + chunk, entries.size))
        idx = entries[pos]
        steps = h * np.maximum(1.0, np.abs(flat[idx]))
        losses = []
        stack = np.repeat(flat[None, :], idx.size, axis=0)
        rows = np.arange(idx.size)
        for sign in (1.0, -1.0):
            stack[rows, idx] = flat[idx] + sign * steps
            params = dict(base)
            params[name] = ad.Tensor(stack.reshape((idx.size,) + theta.shape))
            loss, kinks = _per_copy_loss(model, inputs, params, dtype)
            losses.append(loss)
            kinked[pos] |= _flipped(base_kinks, kinks, idx.size)
        out[pos] = (losses[0] - losses[1]) / (2 * steps)
    return out, kinked


def numeric_gradient(model, subject, name, h=1e-4, chunk=256, entries=None,
                     dtype=np.float64):
    """Central differences for the entries of one tensor.

    Step ``h * max(1, |theta|)``. Perturbed copies are evaluated together on a
    leading axis of the forward pass. Returns ``(gradient, kinked)`` where
    ``kinked`` marks entries whose +-step moved some relu/leaky unit across
    its kink (the difference quotient is meaningless there).

    ``entries`` (flat indices) restricts the work to a subset; the result is
    then flat and aligned with it. ``dtype=np.longdouble`` evaluates the loss
    in extended precision.
    """
    inputs = _as_inputs(model, subject)
    if len(inputs) != 1:
        raise ValueError("numeric_gradient works on a single subject")
    theta = model.store.params[name]
    if entries is not None:
        return _central_differences(model, inputs, name, np.asarray(entries, dtype=np.intp),
                                    h, chunk, dtype)
    out, kinked = _central_differences(model, inputs, name, np.arange(theta.size), h,
                                       chunk, dtype)
    return out.reshape(theta.shape), kinked.reshape(theta.shape)


def relative_errors(analytic, numeric, floor=1e-8):
    """``|a - n| / max(|a|, |n|)`` where ``|a| + |n| > floor``, else 0."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    scale = np.maximum(np.abs(a), np.abs(n))
    measured = np.abs(a) + np.abs(n) > floor
    rel = np.divide(np.abs(a - n), scale, out=np.zeros_like(scale), where=measured)
    return rel, measured


def gradcheck(model, subject, tolerance=1e-4, h=1e-4, fault=None):
    """Compare backward() against central differences on every parameter.

    Entries whose difference step crosses a relu/leaky kink are excluded and
    counted. Entries within a factor ten of the tolerance in float64 are
    re-evaluated in extended precision at the same step: for gradients near
    the measurement floor the float64 difference quotient carries roundoff of
    the same order as the tolerance. ``fault`` names a tensor whose analytic gradient is
    deliberately scaled by 1.5 before comparison (to exercise the failure path).
    """
    if not model.store.names:
        return GradcheckReport(tolerance, [])
    backward(model, subject)
    entries = []
    for name in model.store.names:
        analytic = model.store.grads[name]
        if name == fault:
            analytic = analytic * 1.5
        numeric, kinked = numeric_gradient(model, subject, name, h)
        numeric, kinked = numeric.ravel(), kinked.ravel()
        flat = analytic.ravel()
        rel, measured = relative_errors(flat, numeric)
        suspect = np.flatnonzero(measured & ~kinked & (rel >= tolerance / 10))
        if suspect.size and tolerance > 0:
            refined, refined_kinks = numeric_gradient(model, subject, name, h, entries=suspect,
                                                      dtype=np.longdouble)
            numeric[suspect] = refined
            kinked[suspect] |= refined_kinks
            rel, measured = relative_errors(flat, numeric)
        rel[kinked] = 0.0
        worst = float(rel.max()) if rel.size else 0.0
        entries.append(TensorCheck(name, analytic.size, worst, int((measured & ~kinked).sum()),
                                   int(kinked.sum()), worst < tolerance))
    return GradcheckReport(tolerance, entries)


# Checkpoints ----------------------------------------------------------------


def atomic_write_bytes(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, model, extra=None):
    """Magic, uint64 header length, JSON header, then little-endian float64 tensors."""
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in model.store.params.items()]
    header = {
        "format": "hkgf-checkpoint",
        "version": 1,
        "dtype": "<f8",
        "tensors": tensors,
        "model": model.spec.to_dict(),
        "seed": model.store.seed,
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes()
                    for v in model.store.params.values())
    atomic_write_bytes(path, CHECKPOINT_MAGIC + struct.pack("<Q", len(head)) + head + body)


def load_checkpoint(path):
    """Returns ``(arrays, header)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an hkgf checkpoint")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + n].decode("utf-8"))
    offset = 16 + n
    arrays = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise ValueError(f"{path}: payload truncated at tensor {t['name']}")
        arrays[t["name"]] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes")
    return arrays, header


def model_from_checkpoint(path):
    arrays, header = load_checkpoint(path)
    spec_d = dict(header["model"])
    spec_d["heads"] = tuple(spec_d["heads"])
    model = HKGFModel.create(ModelSpec(**spec_d), header.get("seed", 0))
    model.store.import_weights(arrays, strict=True)
    return model, header
