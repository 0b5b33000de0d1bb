"""Recursive feature elimination with an L2-regularized logistic regression ranker."""

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import EstimatorError, ParameterError


class L2LogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression minimising mean log-loss + ``alpha/2 * ||w||^2``.

    The intercept is not penalized. The objective is strictly convex, so
    the L-BFGS solution does not depend on initialization.
    """

    def __init__(self, alpha=1e-2, tol=1e-10, max_iter=1000):
        self.alpha = alpha
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        classes = np.unique(y)
        if classes.size != 2:
            raise EstimatorError(f"logistic regression needs two classes, got {classes.tolist()}")
        self.classes_ = classes
        t = (y == classes[1]).astype(float)
        n, p = X.shape
        alpha = self.alpha

        def objective(theta):
            w, b = theta[:p], theta[p]
            z = X @ w + b
            loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * alpha * np.dot(w, w)
            r = (0.5 * (1.0 + np.tanh(0.5 * z)) - t) / n
            grad = np.empty(p + 1)
            grad[:p] = X.T @ r + alpha * w
            grad[p] = r.sum()
            return loss, grad

        res = minimize(objective, np.zeros(p + 1), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 0.0})
        self.coef_ = res.x[:p].copy()
        self.intercept_ = float(res.x[p])
        self.n_iter_ = int(res.nit)
        self.n_features_in_ = p
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=float) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        z = self.decision_function(X)
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0.0).astype(int)]


@dataclass(frozen=True, eq=False)
class RfeResult:
    """``support[j]`` marks kept features; ``ranking[j]`` is 1 for kept ones and
    grows with how early feature ``j`` was eliminated.

    ``trace`` holds the surviving column indices before each elimination and
    after the last; ``order`` lists every column from most to least important.
    """

    columns: tuple
    support: np.ndarray
    ranking: np.ndarray
    n_features_target: int
    trace: tuple
    order: tuple

    @property
    def selected(self):
        return [self.columns[j] for j in self.order[: self.n_features_target]]

    def ranked_names(self):
        return [self.columns[j] for j in self.order]

    def to_json(self):
        return json.dumps(
            {c: {"selected": bool(s), "rank": int(r)}
             for c, s, r in zip(self.columns, self.support, self.ranking)},
            indent=2, ensure_ascii=False,
        )


def _eliminate(X, y, n_features, step, alpha):
    p = X.shape[1]
    if isinstance(n_features, bool) or not 1 <= n_features < p:
        raise ParameterError(f"n_features must satisfy 1 <= n_features < {p}, got {n_features}")
    if step < 1:
        raise ParameterError(f"step must be at least 1, got {step}")
    if np.unique(y).size < 2:
        raise EstimatorError("RFE needs both classes present")
    surviving = np.arange(p)
    ranking = np.ones(p, dtype=np.int64)
    trace = [surviving.copy()]
    eliminated = []
    while surviving.size > n_features:
        est = L2LogisticRegression(alpha=alpha).fit(X[:, surviving], y)
        weights = np.abs(est.coef_)
        n_drop = min(step, surviving.size - n_features)
        # stable sort: equal |coef| eliminates the earlier column first
        drop = np.argsort(weights, kind="stable")[:n_drop]
        eliminated.append(surviving[drop])
        surviving = np.delete(surviving, drop)
        trace.append(surviving.copy())
    for rank, group in enumerate(reversed(eliminated), start=2):
        ranking[group] = rank
    final = L2LogisticRegression(alpha=alpha).fit(X[:, surviving], y)
    kept_order = surviving[np.argsort(-np.abs(final.coef_), kind="stable")]
    order = list(kept_order)
    for group in reversed(eliminated):
        order.extend(group[::-1])
    return surviving, ranking, trace, order, final


class RFESelector(SelectorMixin, BaseEstimator):
    """Recursive feature elimination transformer.

    Parameters
    ----------
    n_features_to_select : int
    step : int, default=1
        Features removed per iteration.
    alpha : float, default=1e-2
        L2 strength of the logistic-regression ranker.
    """

    def __init__(self, n_features_to_select=12, step=1, alpha=1e-2):
        self.n_features_to_select = n_features_to_select
        self.step = step
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        surviving, ranking, trace, order, final = _eliminate(
            X, y, self.n_features_to_select, self.step, self.alpha
        )
        support = np.zeros(X.shape[1], dtype=bool)
        support[surviving] = True
        self.support_ = support
        self.ranking_ = ranking
        self.trace_ = tuple(trace)
        self.order_ = tuple(int(j) for j in order)
        self.estimator_ = final
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_


def rfe_select(table, n_features, step=1, alpha=1e-2):
    """Run RFE on a standardized :class:`~trustsense.dataset.FeatureTable`."""
    sel = RFESelector(n_features_to_select=n_features, step=step, alpha=alpha).fit(table.X, table.y)
    return RfeResult(
        columns=tuple(table.columns),
        support=sel.support_,
        ranking=sel.ranking_,
        n_features_target=int(n_features),
        trace=sel.trace_,
        order=sel.order_,
    )


def rfe_sweep(table, n_range=range(4, 13), estimator=None, k=10, seed=0, alpha=1e-2,
              per_fold_standardize=True):
    """Cross-validated accuracy of ``estimator`` on the RFE subset of each size in ``n_range``.

    Returns ``[(n_features, mean_accuracy), ...]`` sorted by ``n_features``.
    ``estimator`` may be a :class:`~trustsense.mlp.ModelSpec` or any
    scikit-learn classifier; the default is the deep reference model.
    """
    from .evaluation import kfold_evaluate
    from .mlp import model_2

    sizes = sorted(set(int(n) for n in n_range))
    if not sizes:
        raise ParameterError("empty feature-count range")
    if sizes[0] < 1 or sizes[-1] >= table.n_features:
        raise ParameterError(f"range must lie within 1..{table.n_features - 1}")
    estimator = model_2(seed=seed) if estimator is None else estimator
    # With step 1 every smaller selection is a point on one elimination path.
    path = rfe_select(table, sizes[0], alpha=alpha)
    by_size = {len(s): s for s in path.trace}
    out = []
    for n in sizes:
        names = [table.columns[j] for j in sorted(by_size[n])]
        summary = kfold_evaluate(table, estimator, names, k=k, seed=seed,
                                 per_fold_standardize=per_fold_standardize)
        out.append((n, summary.aggregate("accuracy", "mean")))
    return out


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n_features", "mean_accuracy"])
        for n, acc in rows:
            writer.writerow([n, repr(float(acc))])
