"""Confusion-matrix metrics, k-fold / holdout evaluation and Max/Mean/Min/SD reports.

Class 1 (trust) is the positive class. Zero denominators give 0 for
precision, recall and F1.
"""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from .dataset import Standardizer, kfold_partition
from .exceptions import EvaluationError, LeakageError
from .mlp import MLPClassifier, ModelSpec

METRIC_KEYS = ("accuracy", "f1", "recall", "precision")
METRIC_LABELS = {"accuracy": "Accuracy", "f1": "F1 Score", "recall": "Recall", "precision": "Precision"}
STAT_KEYS = ("max", "mean", "min", "sd")
STAT_LABELS = {"max": "Max", "mean": "Mean", "min": "Min", "sd": "SD"}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise EvaluationError(f"{name} must be a nonnegative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape:
            raise EvaluationError(f"shape mismatch: {t.shape} vs {p.shape}")
        return cls(
            tp=int(np.sum(t & p)),
            fp=int(np.sum(~t & p)),
            fn=int(np.sum(t & ~p)),
            tn=int(np.sum(~t & ~p)),
        )


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def f1_score(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * ((precision * recall) / (precision + recall))


def metrics(cm):
    if cm.total == 0:
        raise EvaluationError("cannot score an empty confusion matrix")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return Metrics((cm.tp + cm.tn) / cm.total, precision, recall, f1_score(precision, recall))


@dataclass(frozen=True)
class MetricsSummary:
    """Per-fold confusion matrices plus their aggregates.

    ``flags`` lists fold indices whose held-out rows contain a single class.
    """

    folds: tuple
    flags: tuple = ()

    def __post_init__(self):
        if not self.folds:
            raise EvaluationError("summary needs at least one fold")
        object.__setattr__(self, "folds", tuple(self.folds))
        object.__setattr__(self, "flags", tuple(sorted(self.flags)))

    @property
    def k(self):
        return len(self.folds)

    def fold_metrics(self):
        return [metrics(cm) for cm in self.folds]

    def values(self, metric):
        return np.array([getattr(m, metric) for m in self.fold_metrics()])

    def aggregate(self, metric, stat):
        """Aggregate as a fraction; sd is the population sd across folds."""
        v = self.values(metric)
        return float({"max": np.max, "mean": np.mean, "min": np.min, "sd": np.std}[stat](v))

    def table(self):
        """``{stat: {metric: percent}}`` in report order."""
        return {
            stat: {m: 100.0 * self.aggregate(m, stat) for m in METRIC_KEYS} for stat in STAT_KEYS
        }

    def to_dict(self):
        return {
            "k": self.k,
            "folds": [
                {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn, **m._asdict()}
                for cm, m in zip(self.folds, self.fold_metrics())
            ],
            "single_class_folds": list(self.flags),
            "summary_percent": {
                STAT_LABELS[s]: {METRIC_LABELS[m]: round(v, 2) for m, v in row.items()}
                for s, row in self.table().items()
            },
        }

    @classmethod
    def from_dict(cls, d):
        folds = [ConfusionMatrix(f["tp"], f["fp"], f["fn"], f["tn"]) for f in d["folds"]]
        return cls(tuple(folds), tuple(d.get("single_class_folds", ())))


def summarize(fold_results):
    """Build a summary from ``(fold_index, ConfusionMatrix, single_class)`` triples in any order."""
    ordered = sorted(fold_results, key=lambda r: r[0])
    return MetricsSummary(
        tuple(cm for _, cm, _ in ordered),
        tuple(i for i, _, single in ordered if single),
    )


def render_report(summary, fmt="text"):
    """Report layout: Max/Mean/Min/SD rows, percent with two decimals; or JSON."""
    if fmt == "json":
        return json.dumps(summary.to_dict(), indent=2) + "\n"
    if fmt != "text":
        raise EvaluationError(f"unknown report format {fmt!r}")
    lines = [f"{'':<6}" + "".join(f"{METRIC_LABELS[m]:>11}" for m in METRIC_KEYS)]
    for stat, row in summary.table().items():
        lines.append(f"{STAT_LABELS[stat]:<6}" + "".join(f"{row[m]:>11.2f}" for m in METRIC_KEYS))
    return "\n".join(lines) + "\n"


def _make_classifier(estimator):
    if isinstance(estimator, ModelSpec):
        return MLPClassifier.from_spec(estimator)
    return clone(estimator)


def _pipeline(estimator, standardize):
    steps = [("scale", Standardizer())] if standardize else []
    return Pipeline(steps + [("clf", _make_classifier(estimator))])


def _fit_score(pipe, X_train, y_train, X_test, y_test):
    pipe.fit(X_train, y_train)
    cm = ConfusionMatrix.from_predictions(y_test, pipe.predict(X_test))
    return pipe, cm


def _subset(table, feature_subset):
    return table if feature_subset is None else table.select(feature_subset)


def kfold_evaluate(table, estimator, feature_subset=None, k=10, seed=0,
                   per_fold_standardize=True, n_jobs=1, return_models=False):
    """k-fold cross-validation of ``estimator`` on ``table``.

    ``estimator`` is a :class:`ModelSpec` (trained as :class:`MLPClassifier`)
    or any scikit-learn classifier. By default the scaler is refitted on the
    training folds of every split; ``per_fold_standardize=False`` fits it
    once on the whole table instead.
    """
    table = _subset(table, feature_subset)
    plan = kfold_partition(table, k=k, seed=seed)
    X, y = table.X, table.y
    if not per_fold_standardize:
        X = Standardizer().fit_transform(X)
    splits = list(plan.folds())
    jobs = (
        delayed(_fit_score)(_pipeline(estimator, per_fold_standardize),
                            X[tr], y[tr], X[te], y[te])
        for tr, te in splits
    )
    results = Parallel(n_jobs=n_jobs)(jobs)
    summary = summarize(
        (i, cm, np.unique(y[te]).size < 2) for i, ((_, cm), (_, te)) in enumerate(zip(results, splits))
    )
    if return_models:
        return summary, [pipe for pipe, _ in results]
    return summary


def holdout_evaluate(train_table, validation_table, estimator, feature_subset=None):
    """Fit on ``train_table`` (scaler included), score on ``validation_table``.

    Returns a single-fold :class:`MetricsSummary`.
    """
    shared = set(train_table.subjects.tolist()) & set(validation_table.subjects.tolist())
    if shared:
        raise LeakageError(f"subjects present in both tables: {sorted(shared)[:10]}")
    train_table = _subset(train_table, feature_subset)
    validation_table = _subset(validation_table, feature_subset)
    _, cm = _fit_score(_pipeline(estimator, True), train_table.X, train_table.y,
                       validation_table.X, validation_table.y)
    return MetricsSummary((cm,), (0,) if np.unique(validation_table.y).size < 2 else ())
