"""Feature tables: CSV I/O, label encoding, standardization, balancing and splits."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import BalanceError, LabelError, ParameterError, ParseError, SchemaError, SplitError
from .signals import FeatureVector

LABEL_COLUMN = "y"
SUBJECT_COLUMN = "subject"

_LABELS = {"trust": 1, "distrust": 0, "1": 1, "0": 0}


def encode_labels(raw):
    """``"trust"`` -> 1, ``"distrust"`` -> 0; ``"1"``/``"0"`` pass through."""
    if isinstance(raw, (int, np.integer)) and not isinstance(raw, bool) and raw in (0, 1):
        return int(raw)
    token = str(raw).strip()
    try:
        return _LABELS[token]
    except KeyError:
        raise LabelError(f"unknown label token {raw!r}; expected trust, distrust, 0 or 1") from None


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Immutable rows of named features with binary labels and subject ids.

    Every transform returns a new table.
    """

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    columns: tuple

    def __post_init__(self):
        X = _readonly(self.X, float)
        if X.ndim != 2:
            raise SchemaError(f"feature matrix must be 2-d, got shape {X.shape}")
        columns = tuple(self.columns)
        if X.shape[1] != len(columns):
            raise SchemaError(f"{len(columns)} column names for {X.shape[1]} feature columns")
        if len(set(columns)) != len(columns):
            raise SchemaError("column names must be unique")
        y = _readonly(self.y, np.int64)
        subjects = _readonly(self.subjects, np.int64)
        if y.shape != (X.shape[0],) or subjects.shape != (X.shape[0],):
            raise SchemaError("labels and subject ids must have one entry per row")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise SchemaError("labels must be 0 or 1")
        for name, value in (("X", X), ("y", y), ("subjects", subjects), ("columns", columns)):
            object.__setattr__(self, name, value)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    @classmethod
    def from_vectors(cls, vectors):
        vectors = list(vectors)
        if not vectors:
            raise SchemaError("cannot build a table from zero vectors")
        columns = vectors[0].names
        for v in vectors:
            if v.names != columns:
                raise SchemaError("all vectors must share one column order")
            if v.label is None:
                raise SchemaError("every row needs a label")
        return cls(
            np.vstack([v.values for v in vectors]),
            [v.label for v in vectors],
            [v.subject_id for v in vectors],
            columns,
        )

    def rows(self):
        return [
            FeatureVector(self.columns, x, label=int(lab), subject_id=int(s))
            for x, lab, s in zip(self.X, self.y, self.subjects)
        ]

    def take(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureTable(self.X[idx], self.y[idx], self.subjects[idx], self.columns)

    def select(self, names):
        """Restrict to the named feature columns, in the given order."""
        names = list(names)
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise SchemaError(f"unknown feature columns: {missing}")
        pos = [self.columns.index(n) for n in names]
        return FeatureTable(self.X[:, pos], self.y, self.subjects, names)

    def with_features(self, X):
        return FeatureTable(X, self.y, self.subjects, self.columns)

    def class_counts(self):
        return int(np.sum(self.y == 0)), int(np.sum(self.y == 1))


# --- CSV ------------------------------------------------------------------------


def _parse_float(token, row, column):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric cell {token!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {token!r}", row=row, column=column)
    return value


def load_csv(path, columns=None, label_column=LABEL_COLUMN, subject_column=SUBJECT_COLUMN):
    """Read a feature CSV (one column per feature plus label) into a :class:`FeatureTable`.

    Every header field other than the label and subject columns is a
    feature. When ``columns`` is given, those features must all be present
    and the table is returned in that order. Without a subject column each
    row is its own subject.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("no data rows") from None
        if label_column not in header:
            raise ParseError("missing label column", row=1, column=label_column)
        if len(set(header)) != len(header):
            raise ParseError("duplicate header names", row=1)
        label_pos = header.index(label_column)
        subject_pos = header.index(subject_column) if subject_column in header else None
        feature_pos = [i for i in range(len(header)) if i not in (label_pos, subject_pos)]
        feature_names = [header[i] for i in feature_pos]
        if columns is not None:
            for name in columns:
                if name not in feature_names:
                    raise ParseError("missing column", row=1, column=name)

        X, y, subjects = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=row_no)
            X.append([_parse_float(row[i], row_no, header[i]) for i in feature_pos])
            try:
                y.append(encode_labels(row[label_pos]))
            except LabelError as exc:
                raise ParseError(str(exc), row=row_no, column=label_column) from None
            if subject_pos is None:
                subjects.append(len(subjects))
            else:
                s = _parse_float(row[subject_pos], row_no, subject_column)
                if s != int(s):
                    raise ParseError(f"subject id {row[subject_pos]!r} is not an integer",
                                     row=row_no, column=subject_column)
                subjects.append(int(s))
    if not X:
        raise ParseError("no data rows")
    table = FeatureTable(np.array(X), y, subjects, feature_names)
    return table.select(columns) if columns is not None else table


def write_csv(table, path, label_column=LABEL_COLUMN, subject_column=SUBJECT_COLUMN):
    """Write ``table`` with shortest round-trip float formatting (byte-deterministic)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*table.columns, label_column, subject_column])
        for x, lab, s in zip(table.X.tolist(), table.y.tolist(), table.subjects.tolist()):
            writer.writerow([*map(repr, x), lab, s])


# --- standardization ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalerParams:
    """Per-column mean and population sd fitted on training rows."""

    columns: tuple
    mean: np.ndarray
    sd: np.ndarray
    degenerate: np.ndarray

    def to_json(self):
        return json.dumps(
            {
                c: {"mean": float(m), "sd": float(s), "degenerate": bool(d)}
                for c, m, s, d in zip(self.columns, self.mean, self.sd, self.degenerate)
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        cols = tuple(data)
        return cls(
            cols,
            np.array([data[c]["mean"] for c in cols], dtype=float),
            np.array([data[c]["sd"] for c in cols], dtype=float),
            np.array([data[c]["degenerate"] for c in cols], dtype=bool),
        )


def _fit_params(X, columns):
    X = check_array(X, dtype=float)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    degenerate = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    return ScalerParams(tuple(columns), mean, sd, degenerate)


def _apply_params(params, X):
    X = check_array(X, dtype=float)
    if X.shape[1] != len(params.columns):
        raise SchemaError(
            f"scaler was fitted on {len(params.columns)} columns, table has {X.shape[1]}"
        )
    keep = params.degenerate
    scale = np.where(keep, 1.0, params.sd)
    shift = np.where(keep, 0.0, params.mean)
    return (X - shift) / scale


def standardize_fit(train):
    return _fit_params(train.X, train.columns)


def standardize_apply(params, table):
    if len(table.columns) == len(params.columns) and tuple(table.columns) != params.columns:
        raise SchemaError("table columns differ from the columns the scaler was fitted on")
    return table.with_features(_apply_params(params, table.X))


class Standardizer(TransformerMixin, BaseEstimator):
    """z-score transformer with population sd; zero-sd columns pass through unchanged.

    Attributes
    ----------
    params_ : ScalerParams
    degenerate_ : ndarray of bool
        Columns left untouched because their training sd is zero.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.params_ = _fit_params(X, [f"x{i + 1}" for i in range(X.shape[1])])
        self.mean_ = self.params_.mean
        self.scale_ = self.params_.sd
        self.degenerate_ = self.params_.degenerate
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return _apply_params(self.params_, X)


# --- balancing and splits ------------------------------------------------------------


def balance_downsample(table, seed=0):
    """Drop random majority-class rows until both classes have the minority count.

    Retained rows keep their original order.
    """
    n0, n1 = table.class_counts()
    if n0 == 0 or n1 == 0:
        raise BalanceError("balancing needs both classes present")
    if n0 == n1:
        return table
    majority = 1 if n1 > n0 else 0
    rng = np.random.default_rng(seed)
    major_idx = np.flatnonzero(table.y == majority)
    kept = rng.choice(major_idx, size=min(n0, n1), replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(table.y != majority), kept]))
    return table.take(keep)


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Train/validation partition (by subject or by row) and/or k-fold assignment."""

    train_subjects: frozenset = frozenset()
    validation_subjects: frozenset = frozenset()
    train_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    validation_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    fold_assignments: np.ndarray = None

    @property
    def k(self):
        return 0 if self.fold_assignments is None else int(self.fold_assignments.max()) + 1

    def fold_sizes(self):
        return np.bincount(self.fold_assignments, minlength=self.k)

    def folds(self):
        """Yield ``(train_index, test_index)`` per fold, in fold order."""
        for f in range(self.k):
            yield (
                np.flatnonzero(self.fold_assignments != f),
                np.flatnonzero(self.fold_assignments == f),
            )


def _n_train(train_fraction, n):
    if not (0.0 < train_fraction < 1.0):
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    return min(max(int(math.floor(train_fraction * n + 0.5)), 1), n - 1)


def subject_split(table, train_fraction=0.7, seed=0, by_subject=True):
    """Partition subjects (default) or rows into train and validation sides.

    ``round(train_fraction * n_subjects)`` subjects go to training, so 45
    subjects at 0.7 give 31/14.
    """
    rng = np.random.default_rng(seed)
    if not by_subject:
        n = len(table)
        if n < 2:
            raise SplitError("row-wise split needs at least 2 rows")
        perm = rng.permutation(n)
        cut = _n_train(train_fraction, n)
        return SplitPlan(
            train_rows=np.sort(perm[:cut]),
            validation_rows=np.sort(perm[cut:]),
            train_subjects=frozenset(table.subjects[perm[:cut]].tolist()),
            validation_subjects=frozenset(table.subjects[perm[cut:]].tolist()),
        )
    subjects = np.unique(table.subjects)
    if subjects.size < 2:
        raise SplitError(f"subject split needs at least 2 subjects, got {subjects.size}")
    perm = rng.permutation(subjects)
    cut = _n_train(train_fraction, subjects.size)
    train = frozenset(perm[:cut].tolist())
    in_train = np.isin(table.subjects, perm[:cut])
    return SplitPlan(
        train_subjects=train,
        validation_subjects=frozenset(perm[cut:].tolist()),
        train_rows=np.flatnonzero(in_train),
        validation_rows=np.flatnonzero(~in_train),
    )


def kfold_partition(table, k=10, seed=0):
    """Shuffle rows and deal them round-robin into ``k`` folds (sizes differ by at most 1)."""
    n = table if isinstance(table, (int, np.integer)) else len(table)
    if k < 2:
        raise ParameterError(f"k must be at least 2, got {k}")
    if k > n:
        raise ParameterError(f"k={k} exceeds the row count {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return SplitPlan(fold_assignments=folds)
