"""Classification metrics, the repeated cross-validation protocol, Welch tests
and extraction of discriminative ROI pairs."""

import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata
from sklearn.model_selection import KFold, StratifiedKFold

METRICS = ("auc", "acc", "f1", "bac", "sen", "spe", "pre")
WORKERS_ENV = "HKGF_WORKERS"


class FoldError(ValueError):
    """A cross-validation fold cannot be scored (e.g. it holds one class)."""


# Metrics -------------------------------------------------------------------


def _check_binary(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.ndim != 1 or scores.shape != labels.shape:
        raise ValueError(f"labels and scores must be equal-length vectors, got "
                         f"{labels.shape} and {scores.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return labels.astype(np.int64), scores


def pair_counting_auc(labels, scores):
    """Fraction of (positive, negative) pairs ordered correctly; ties count one half.

    Evaluated through mid-ranks, which is the same count in ``O(n log n)``.
    """
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when only one class is present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def _ratio(num, den, metric):
    if den == 0:
        warnings.warn(f"{metric}: zero denominator, reported as 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return num / den


def compute_metrics(labels, scores, threshold=0.5):
    """Percent-valued metrics of one run; a score >= ``threshold`` predicts class 1.

    Class 1 is the patient group, so SEN is the true-positive rate.
    """
    labels, scores = _check_binary(labels, scores)
    if scores.min() < 0 or scores.max() > 1:
        raise ValueError("scores must lie in [0, 1]")
    auc = pair_counting_auc(labels, scores)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    sen = _ratio(tp, tp + fn, "sen")
    spe = _ratio(tn, tn + fp, "spe")
    pre = _ratio(tp, tp + fp, "pre")
    f1 = _ratio(2 * pre * sen, pre + sen, "f1")
    run = {
        "auc": auc, "acc": (tp + tn) / labels.size, "f1": f1, "bac": (sen + spe) / 2,
        "sen": sen, "spe": spe, "pre": pre,
    }
    return MetricsReport([{k: 100.0 * v for k, v in run.items()}])


@dataclass
class MetricsReport:
    """Per-run percent metrics with their mean and (population) std."""

    runs: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for run in self.runs:
            missing = set(METRICS) - set(run)
            if missing:
                raise ValueError(f"run lacks metrics {sorted(missing)}")

    def values(self, metric):
        return np.array([run[metric] for run in self.runs])

    def mean(self, metric):
        return float(self.values(metric).mean())

    def std(self, metric):
        return float(self.values(metric).std())

    def __getattr__(self, name):
        if name in METRICS:
            return self.mean(name)
        raise AttributeError(name)

    def to_dict(self):
        return {
            "metrics": [{"metric": m, "mean": self.mean(m), "std": self.std(m),
                         "per_repeat": [float(v) for v in self.values(m)]} for m in METRICS],
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        by_metric = {row["metric"]: row["per_repeat"] for row in d["metrics"]}
        n = len(by_metric["auc"])
        runs = [{m: by_metric[m][i] for m in METRICS} for i in range(n)]
        return cls(runs, d.get("meta", {}))

    def format_table(self):
        lines = [f"{'metric':<6} {'mean':>8} {'std':>7}"]
        for m in METRICS:
            lines.append(f"{m.upper():<6} {self.mean(m):>8.2f} {self.std(m):>7.2f}")
        return "\n".join(lines)


# Cross-validation ----------------------------------------------------------


@dataclass(frozen=True)
class CvPlan:
    folds: int = 5
    repeats: int = 5
    seeds: tuple = None
    stratified: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        seeds = tuple(range(self.repeats)) if self.seeds is None else tuple(int(s) for s in self.seeds)
        if len(seeds) != self.repeats:
            raise ValueError(f"{len(seeds)} seeds given for {self.repeats} repeats")
        object.__setattr__(self, "seeds", seeds)

    def splits(self, labels, repeat):
        seed = self.seeds[repeat]
        splitter = (StratifiedKFold if self.stratified else KFold)(
            n_splits=self.folds, shuffle=True, random_state=seed)
        return list(splitter.split(np.zeros(len(labels)), labels))

    def to_dict(self):
        return {"folds": self.folds, "repeats": self.repeats, "seeds": list(self.seeds),
                "stratified": self.stratified}


def fold_seed(repeat_seed, fold):
    """Model/shuffle seed of one fold, a pure function of (repeat seed, fold)."""
    return int(np.random.SeedSequence([repeat_seed, fold]).generate_state(1)[0])


def _run_fold(job):
    from dataclasses import replace

    from .training import HKGFModel, forward, train

    subjects, train_idx, test_idx, model_spec, train_cfg, seed, repeat, fold = job
    train_set = [subjects[i] for i in train_idx]
    test_set = [subjects[i] for i in test_idx]
    for name, part in (("training", train_set), ("held-out", test_set)):
        if len({s.label for s in part}) < 2:
            raise FoldError(f"repeat {repeat} fold {fold}: {name} split holds one class")
    model = HKGFModel.create(model_spec, seed)
    train(model, train_set, replace(train_cfg, seed=seed))
    _, probs = forward(model, test_set)
    return repeat, fold, np.asarray(test_idx), probs[:, 1]


def workers_from_env(default=1):
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def cross_validate(cohort, model_spec, train_cfg, plan=CvPlan(), workers=None):
    """Repeated k-fold protocol; metrics are computed on the pooled held-out
    predictions of each repeat and then summarised over repeats.

    Every fold is seeded from its repeat seed and index only, so the result
    does not depend on ``workers`` (default from ``HKGF_WORKERS``).
    """
    subjects = list(cohort)
    labels = np.array([s.label for s in subjects])
    workers = workers_from_env() if workers is None else workers
    jobs = []
    for r in range(plan.repeats):
        for f, (tr, te) in enumerate(plan.splits(labels, r)):
            jobs.append((subjects, tr, te, model_spec, train_cfg, fold_seed(plan.seeds[r], f), r, f))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(job) for job in jobs]
    runs = []
    for r in range(plan.repeats):
        scores = np.full(len(subjects), np.nan)
        for rep, _, idx, p in sorted(results, key=lambda x: (x[0], x[1])):
            if rep == r:
                scores[idx] = p
        runs.append(compute_metrics(labels, scores).runs[0])
    meta = {"plan": plan.to_dict(), "model": model_spec.to_dict(),
            "n_subjects": len(subjects)}
    return MetricsReport(runs, meta)


# Significance --------------------------------------------------------------


def _welch(a, b):
    """Vectorised Welch test along axis 0; returns ``(t, p)`` arrays."""
    na, nb = a.shape[0], b.shape[0]
    va = a.var(axis=0, ddof=1) / na
    vb = b.var(axis=0, ddof=1) / nb
    diff = a.mean(axis=0) - b.mean(axis=0)
    se2 = va + vb
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / np.sqrt(se2)
        dof = se2**2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
        p = betainc(dof / 2, 0.5, dof / (dof + t * t))
    degenerate = se2 == 0
    same = degenerate & (diff == 0)
    t = np.where(same, 0.0, np.where(degenerate, np.copysign(np.inf, diff), t))
    p = np.where(same, 1.0, np.where(degenerate, 0.0, p))
    return t, p


def welch_t_test(sample_a, sample_b):
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    t, p = _welch(a, b)
    return float(t), float(p)


# Discriminative connections ------------------------------------------------


@dataclass(frozen=True)
class Connection:
    i: int
    j: int
    score: float
    p_value: float = None

    def to_dict(self):
        d = {"i": self.i, "j": self.j, "score": self.score}
        if self.p_value is not None:
            d["p_value"] = self.p_value
        return d


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if (labels == 1).sum() < 2 or (labels == 0).sum() < 2:
        raise ValueError("each class needs at least two subjects")
    return labels


def roi_correlations(embeddings):
    """Per-subject Pearson matrices between ROI embedding rows: ``(S, N, N)``."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"embeddings must be S x N x M, got shape {x.shape}")
    centered = x - x.mean(axis=2, keepdims=True)
    norms = np.linalg.norm(centered, axis=2, keepdims=True)
    unit = np.divide(centered, norms, out=np.zeros_like(centered), where=norms > 0)
    return np.clip(unit @ np.swapaxes(unit, 1, 2), -1.0, 1.0)


def discriminative_connections_correlation(embeddings, labels, top_k=15, alpha=0.05):
    """ROI pairs whose embedding correlation differs between classes.

    Each pair ``i < j`` gets a Welch test (class 1 against class 0); pairs
    with ``p < alpha`` are ranked by ascending p (ties by ``(i, j)``). The
    score is the t statistic.
    """
    corr = roi_correlations(embeddings)
    labels = _check_labels(labels, corr.shape[0])
    iu, ju = np.triu_indices(corr.shape[1], k=1)
    pairs = corr[:, iu, ju]
    t, p = _welch(pairs[labels == 1], pairs[labels == 0])
    keep = np.flatnonzero(p < alpha)
    order = keep[np.lexsort((ju[keep], iu[keep], p[keep]))]
    return [Connection(int(iu[k]), int(ju[k]), float(t[k]), float(p[k])) for k in order[:top_k]]


def head_average(attention):
    """``(S, K, N, N)`` or ``(S, N, N)`` attention to per-subject ``(S, N, N)``."""
    a = np.asarray(attention, dtype=np.float64)
    if a.ndim == 4:
        return a.mean(axis=1)
    if a.ndim == 3:
        return a
    raise ValueError(f"attention must be S x N x N or S x K x N x N, got shape {a.shape}")


def discriminative_connections_attention(attention, labels, top_k=15):
    """ROI pairs ranked by mean attention over the positive class.

    Heads are averaged; the pair score is ``(W[i, j] + W[j, i]) / 2`` of the
    class-1 mean matrix, ranked descending with ties by ``(i, j)``.
    """
    w = head_average(attention)
    if w.shape[1] != w.shape[2]:
        raise ValueError(f"attention matrices must be square, got {w.shape[1:]}")
    labels = np.asarray(labels)
    if labels.shape != (w.shape[0],):
        raise ValueError(f"expected {w.shape[0]} labels, got shape {labels.shape}")
    if not np.any(labels == 1):
        raise ValueError("no positive-class subjects")
    mean = w[labels == 1].mean(axis=0)
    sym = (mean + mean.T) / 2
    iu, ju = np.triu_indices(sym.shape[0], k=1)
    scores = sym[iu, ju]
    order = np.lexsort((ju, iu, -scores))
    return [Connection(int(iu[k]), int(ju[k]), float(scores[k])) for k in order[:top_k]]
