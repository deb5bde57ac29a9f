"""Gaussian naive Bayes over MNF descriptors, cross-validation and metrics."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .mnf import SOURCES, MnfDescriptor

log = logging.getLogger(__name__)

LABELS = ("progressive", "non_progressive")
VAR_FLOOR_SCALE = 1e-9
MAX_FOLD_RETRIES = 20


@dataclass(frozen=True)
class NaiveBayesModel:
    classes: tuple
    log_prior: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * np.sum(np.log(2 * np.pi * self.variances)[None] + diff**2 / self.variances[None], axis=2)
        return ll + self.log_prior[None, :]

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[np.argmax(self.joint_log_likelihood(X), axis=1)]


def train_nbc(X, y) -> NaiveBayesModel:
    """Fit class priors and per-feature Gaussians.

    Variances are floored at ``1e-9 * (feature variance over all cases + 1e-12)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=object)
    classes = tuple(sorted(set(y.tolist())))
    if len(classes) < 2:
        raise ValueError("training set contains a single class")
    counts = np.array([np.sum(y == c) for c in classes])
    if np.any(counts < 2):
        raise ValueError(f"each class needs at least 2 cases, got {dict(zip(classes, counts.tolist()))}")
    floor = VAR_FLOOR_SCALE * (X.var(axis=0) + 1e-12)
    means = np.stack([X[y == c].mean(axis=0) for c in classes])
    variances = np.stack([np.maximum(X[y == c].var(axis=0), floor) for c in classes])
    log_prior = np.log(counts / counts.sum())
    return NaiveBayesModel(classes, log_prior, means, variances)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsReport:
    """Binary metrics; ``None`` marks a ratio whose denominator is zero.

    ``j_index`` is Youden's J (recall - fp_rate) and may be negative.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    recall: float | None
    fp_rate: float | None
    accuracy: float | None
    precision: float | None
    f_measure: float | None
    j_index: float | None
    dice: float | None
    roc_area: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    def check_identities(self, tol: float = 1e-12) -> None:
        p, r = self.precision, self.recall
        if p is not None and r is not None and p + r > 0:
            assert abs(self.f_measure - 2 * p * r / (p + r)) <= tol
        denom = 2 * self.tp + self.fp + self.fn
        if denom > 0:
            assert abs(self.dice - 2 * self.tp / denom) <= tol
        if r is not None and self.fp_rate is not None:
            assert abs(self.j_index - (r - self.fp_rate)) <= tol


def _ratio(num, den):
    return num / den if den > 0 else None


def roc_auc(scores, positives) -> float | None:
    """Mann-Whitney AUC with mid-ranks for ties."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = stats.rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def compute_metrics(tp: int, fp: int, tn: int, fn: int, scores=None, positives=None) -> MetricsReport:
    total = tp + fp + tn + fn
    if total < 1:
        raise ValueError("empty confusion matrix")
    recall = _ratio(tp, tp + fn)
    fp_rate = _ratio(fp, fp + tn)
    precision = _ratio(tp, tp + fp)
    f_measure = None
    if recall is not None and precision is not None and precision + recall > 0:
        f_measure = 2 * precision * recall / (precision + recall)
    j_index = recall - fp_rate if recall is not None and fp_rate is not None else None
    auc = roc_auc(scores, positives) if scores is not None else None
    report = MetricsReport(
        tp, fp, tn, fn,
        recall=recall,
        fp_rate=fp_rate,
        accuracy=(tp + tn) / total,
        precision=precision,
        f_measure=f_measure,
        j_index=j_index,
        dice=_ratio(2 * tp, 2 * tp + fp + fn),
        roc_area=auc,
    )
    report.check_identities()
    return report


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class CVReport:
    scheme: str
    runs: int
    seed: int
    positive: str
    metrics: MetricsReport
    run_metrics: list[MetricsReport] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    episodes: int = 0

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "runs": self.runs,
            "seed": self.seed,
            "positive": self.positive,
            "episodes": self.episodes,
            "metrics": self.metrics.to_dict(),
            "mean": self.mean,
            "sd": self.sd,
            "run_metrics": [m.to_dict() for m in self.run_metrics],
        }


_METRIC_NAMES = ("recall", "fp_rate", "accuracy", "precision", "f_measure", "j_index", "dice", "roc_area")


def stratified_folds(y, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per case; each class is shuffled and dealt round-robin."""
    y = np.asarray(y, dtype=object)
    folds = np.empty(len(y), dtype=int)
    start = 0
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (start + np.arange(len(idx))) % k
        start += len(idx)
    return folds


def _evaluate(X, y, folds, positive):
    scores = np.zeros(len(y))
    pred = np.empty(len(y), dtype=object)
    for f in np.unique(folds):
        test = folds == f
        model = train_nbc(X[~test], y[~test])
        proba = model.predict_proba(X[test])
        pos_col = model.classes.index(positive)
        scores[test] = proba[:, pos_col]
        pred[test] = model.predict(X[test])
    is_pos = y == positive
    pred_pos = pred == positive
    tp = int(np.sum(is_pos & pred_pos))
    fp = int(np.sum(~is_pos & pred_pos))
    tn = int(np.sum(~is_pos & ~pred_pos))
    fn = int(np.sum(is_pos & ~pred_pos))
    return compute_metrics(tp, fp, tn, fn, scores, is_pos), scores


def _folds_ok(y, folds):
    for f in np.unique(folds):
        train = y[folds != f]
        _, counts = np.unique(train, return_counts=True)
        if len(counts) < 2 or counts.min() < 2:
            return False
    return True


def parse_scheme(scheme: str) -> int | None:
    """``"loo"`` -> None, ``"k5"``/``"kfold5"``/``"5"`` -> 5."""
    s = scheme.lower().replace("kfold", "k").replace("-", "")
    if s == "loo":
        return None
    s = s.lstrip("k").strip("()")
    try:
        k = int(s)
    except ValueError:
        raise ValueError(f"unknown cross-validation scheme {scheme!r}") from None
    if k < 2:
        raise ValueError(f"k-fold needs k >= 2, got {k}")
    return k


def default_positive(labels) -> str:
    classes = sorted(set(labels))
    return "progressive" if "progressive" in classes else classes[-1]


def cross_validate(X, y, scheme: str = "loo", runs: int = 1, seed: int = 0, positive: str | None = None) -> CVReport:
    """LOO or stratified k-fold evaluation of the naive Bayes classifier.

    Confusion counts are pooled over the folds of a run. For k-fold the
    reported ``metrics`` pool every run (the AUC ranks all held-out
    posteriors together); ``mean``/``sd`` summarise the runs. Each run draws
    its folds from its own child of ``SeedSequence(seed)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=object)
    positive = positive or default_positive(y.tolist())
    k = parse_scheme(scheme)
    n = len(y)
    if k is None:
        folds = np.arange(n)
        m, _ = _evaluate(X, y, folds, positive)
        mean, sd = _summary([m])
        return CVReport("loo", 1, seed, positive, m, [m], mean, sd, episodes=n)
    if n < k:
        raise ValueError(f"{k}-fold needs at least {k} cases, got {n}")
    children = np.random.SeedSequence(seed).spawn(runs)
    run_metrics = []
    tp = fp = tn = fn = 0
    scores = []
    episodes = 0
    for child in children:
        rng = np.random.default_rng(child)
        for _ in range(MAX_FOLD_RETRIES):
            folds = stratified_folds(y, k, rng)
            if _folds_ok(y, folds):
                break
        else:
            raise ValueError("could not draw folds with both classes in every training set")
        m, s = _evaluate(X, y, folds, positive)
        scores.append(s)
        run_metrics.append(m)
        tp, fp, tn, fn = tp + m.tp, fp + m.fp, tn + m.tn, fn + m.fn
        episodes += len(np.unique(folds))
    pooled = compute_metrics(tp, fp, tn, fn, np.concatenate(scores), np.tile(y == positive, runs))
    mean, sd = _summary(run_metrics)
    return CVReport(f"k{k}", runs, seed, positive, pooled, run_metrics, mean, sd, episodes=episodes)


def _summary(reports: Sequence[MetricsReport]):
    mean, sd = {}, {}
    for name in _METRIC_NAMES:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        mean[name] = float(np.mean(vals)) if vals else None
        sd[name] = float(np.std(vals, ddof=1)) if len(vals) > 1 else (0.0 if vals else None)
    return mean, sd


# ---------------------------------------------------------------------------
# descriptor alignment


def descriptor_matrix(descriptors: Sequence[MnfDescriptor]) -> tuple[np.ndarray, list[tuple]]:
    """Stack descriptors into a case x feature matrix.

    Features are aligned on ``(source, level, octant)``: a deeper level's
    octants are comparable across cases even when a different parent was
    expanded. Keys missing from any case (adaptive depth) are dropped.
    """
    keyed = []
    for d in descriptors:
        row = {}
        for f in d.features:
            octant = f.path.rsplit("/", 1)[-1]
            row[(f.source, f.level, octant)] = f.fd
        keyed.append(row)
    common = set(keyed[0])
    for row in keyed[1:]:
        common &= set(row)
    dropped = set().union(*keyed) - common
    if dropped:
        log.warning("dropping %d features absent from some cases", len(dropped))
    # same order as within a descriptor: source, level, then path text
    keys = sorted(common, key=lambda k: (SOURCES.index(k[0]), k[1], k[2]))
    return np.array([[row[k] for k in keys] for row in keyed]), keys


def read_labels(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"case_id", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'case_id,label'")
        return {row["case_id"]: row["label"] for row in reader}


def load_feature_dir(path) -> list[MnfDescriptor]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no feature JSON files in {path}")
    return [MnfDescriptor.load(f) for f in files]
