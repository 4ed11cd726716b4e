"""scikit-learn style front end for the fusion classifier.

Samples are :class:`~hkgf.graphs.Subject` objects (each with an ``fc`` and
an ``sc`` graph) rather than rows of a matrix, so the usual array checks are
replaced by :func:`check_subjects`.
"""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .graphs import Subject
from .model import MissingModalityError, ModelSpec
from .training import HKGFModel, TrainConfig, embed, forward, train

REQUIRED_MODALITIES = ("fc", "sc")


def check_subjects(X, require_labels=False):
    """Validate a sequence of subjects; returns it as a list.

    Every subject needs both modalities and the same ROI count.
    """
    if isinstance(X, Subject):
        raise TypeError("expected a sequence of Subject objects, got a single Subject")
    try:
        subjects = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of Subject objects, got {type(X).__name__}") from None
    if not subjects:
        raise ValueError("no subjects given")
    n_rois = None
    for s in subjects:
        if not isinstance(s, Subject):
            raise TypeError(f"expected Subject, got {type(s).__name__}")
        for modality in REQUIRED_MODALITIES:
            if modality not in s.graphs:
                raise MissingModalityError(f"subject {s.id} has no {modality} graph")
        if n_rois is None:
            n_rois = s.n_rois
        elif s.n_rois != n_rois:
            raise ValueError(f"subject {s.id} has {s.n_rois} ROIs, expected {n_rois}")
    if require_labels and len({s.label for s in subjects}) < 2:
        raise ValueError("training subjects must include both classes")
    return subjects


def _with_labels(subjects, y):
    if y is None:
        return subjects
    y = np.asarray(y)
    if y.shape != (len(subjects),):
        raise ValueError(f"y has shape {y.shape}, expected ({len(subjects)},)")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("y must contain only 0 and 1")
    return [replace(s, label=int(label)) for s, label in zip(subjects, y)]


class HKGFClassifier(ClassifierMixin, BaseEstimator):
    """Hyperbolic kernel graph fusion classifier.

    Parameters
    ----------
    backbone : {"hkgcn", "hkgat", "gcn", "gat"}
        Layer family used for both encoders and the coupling stage.
    hidden : int
        Width of every graph layer (per head for attention backbones).
    n_layers : int
    heads : tuple of int
        Heads per layer; attention backbones only.
    lam : float
        Scale of the cosine term.
    c : float
        Ball curvature magnitude.
    epsilon : float
        Margin kept from the ball boundary by the projection.
    hnn_hidden : int
        Width of the two hidden layers of the classifier head.
    learning_rate, weight_decay, batch_size, epochs :
        Adam settings.
    random_state : int
        Seeds parameter initialisation and the mini-batch order.
    """

    def __init__(self, backbone="hkgcn", hidden=64, n_layers=2, heads=(4, 1), lam=0.01, c=1e-3,
                 epsilon=1e-5, hnn_hidden=32, learning_rate=1e-4, weight_decay=1e-4,
                 batch_size=128, epochs=50, random_state=0):
        self.backbone = backbone
        self.hidden = hidden
        self.n_layers = n_layers
        self.heads = heads
        self.lam = lam
        self.c = c
        self.epsilon = epsilon
        self.hnn_hidden = hnn_hidden
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def _model_spec(self, n_rois):
        return ModelSpec(backbone=self.backbone, n_rois=n_rois, hidden=self.hidden,
                         n_layers=self.n_layers, heads=tuple(self.heads), lam=self.lam, c=self.c,
                         epsilon=self.epsilon, hnn_hidden=self.hnn_hidden)

    def _train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                           batch_size=self.batch_size, epochs=self.epochs,
                           seed=self.random_state)

    def fit(self, X, y=None):
        """Train on subjects; ``y`` (if given) overrides the subjects' labels."""
        subjects = _with_labels(check_subjects(X), y)
        check_subjects(subjects, require_labels=True)
        self.spec_ = self._model_spec(subjects[0].n_rois)
        self.model_ = HKGFModel.create(self.spec_, self.random_state)
        self.history_ = train(self.model_, subjects, self._train_config())
        self.classes_ = np.array([0, 1])
        return self

    def _inputs(self, X):
        check_is_fitted(self, "model_")
        subjects = check_subjects(X)
        if subjects[0].n_rois != self.spec_.n_rois:
            raise ValueError(f"model was fitted on {self.spec_.n_rois} ROIs, "
                             f"got {subjects[0].n_rois}")
        return subjects

    def predict_proba(self, X):
        subjects = self._inputs(X)
        _, probs = forward(self.model_, subjects)
        return probs

    def decision_function(self, X):
        """Log-odds of class 1."""
        probs = self.predict_proba(X)
        with np.errstate(divide="ignore"):
            return np.log(probs[:, 1]) - np.log(probs[:, 0])

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    def embed(self, X):
        """Fused coupling-stage node features, ``(S, N, M')``."""
        subjects = self._inputs(X)
        return embed(self.model_, subjects)

    def attention(self, X, layer=0):
        """Second-stage attention of one coupling layer, ``(S, K, N, N)``."""
        subjects = self._inputs(X)
        if not self.spec_.is_attention:
            raise ValueError(f"backbone {self.spec_.backbone!r} has no attention weights")
        if not 0 <= layer < self.spec_.n_layers:
            raise ValueError(f"layer must lie in [0, {self.spec_.n_layers}), got {layer}")
        record = {}
        embed(self.model_, subjects, record=record)
        return record["coupling_attention"][layer]
