"""Local surrogate explanations for tabular probability models.

An instance is explained by sampling perturbations around it, weighting
each sample by an exponential kernel on its distance to the instance,
and fitting a weighted ridge regression to the black box's class-1
probability. The ``K`` features with the largest coefficients in a fit on
all features are kept and refitted alone.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .exceptions import NumericError, ParameterError

DEFAULT_N_SAMPLES = 5000
DEFAULT_RIDGE = 1e-3
CLASS_NAMES = {0: "distrust", 1: "trust"}


def default_kernel_width(n_features):
    return 0.75 * np.sqrt(n_features)


def _train_scale(train_stats, n_features):
    if train_stats is None:
        return np.ones(n_features)
    sd = np.asarray(train_stats.sd, dtype=float)
    if sd.shape != (n_features,):
        raise ParameterError(f"train_stats cover {sd.size} features, instance has {n_features}")
    return np.where(np.asarray(train_stats.degenerate, dtype=bool) | (sd == 0.0), 1.0, sd)


def perturb(x, n_samples, train_stats=None, seed=0):
    """``n_samples`` rows around ``x``; row 0 is ``x`` itself.

    Each feature is offset by a standard normal draw times that feature's
    training sd (``train_stats``, a :class:`~trustsense.dataset.ScalerParams`);
    without stats the sd is 1, i.e. the instance is assumed standardized.
    """
    x = np.asarray(x, dtype=float).ravel()
    if isinstance(n_samples, bool) or int(n_samples) != n_samples or n_samples < 50:
        raise ParameterError(f"n_samples must be an integer >= 50, got {n_samples!r}")
    scale = _train_scale(train_stats, x.size)
    rng = np.random.default_rng(seed)
    samples = x + rng.standard_normal((int(n_samples), x.size)) * scale
    samples[0] = x
    return samples


def kernel_weight(distance, width):
    """``exp(-d^2 / width^2)``."""
    if np.any(np.asarray(width) <= 0):
        raise ParameterError(f"kernel width must be positive, got {width}")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distances must be nonnegative")
    w = np.exp(-(d**2) / width**2)
    return float(w) if w.ndim == 0 else w


def _weighted_ridge(X, t, w, alpha):
    """Intercept plus coefficients minimising ``sum w (t - b - X c)^2 + alpha ||c||^2``."""
    sw = w.sum()
    x_mean = w @ X / sw
    t_mean = w @ t / sw
    Xc = X - x_mean
    tc = t - t_mean
    A = Xc.T @ (Xc * w[:, None])
    A[np.diag_indices_from(A)] += alpha
    rhs = Xc.T @ (w * tc)
    try:
        coef = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"surrogate system is singular: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise NumericError("surrogate fit produced non-finite coefficients")
    return float(t_mean - x_mean @ coef), coef


def _weighted_r2(X, t, w, intercept, coef):
    resid = t - intercept - X @ coef
    ss_res = w @ resid**2
    t_mean = w @ t / w.sum()
    ss_tot = w @ (t - t_mean) ** 2
    if ss_tot <= 1e-300:
        return 1.0 if ss_res <= 1e-300 else 0.0
    return float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class SurrogateFit:
    intercept: float
    features: np.ndarray
    coef: np.ndarray
    r2: float
    # surrogate prediction at the explained instance (row 0 of the samples)
    local_prediction: float = float("nan")


def fit_surrogate(samples, probabilities, weights, K, alpha=DEFAULT_RIDGE):
    """Sparse weighted-ridge surrogate.

    Features are ranked by |coefficient| in a fit on all columns; the top
    ``K`` are refitted alone and their coefficients reported in that order.
    """
    X = np.asarray(samples, dtype=float)
    t = np.asarray(probabilities, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if X.ndim != 2 or t.size != X.shape[0] or w.size != X.shape[0]:
        raise ParameterError("samples, probabilities and weights must agree in length")
    if not 1 <= K <= X.shape[1]:
        raise ParameterError(f"K must lie in 1..{X.shape[1]}, got {K}")
    if np.any(w <= 0):
        raise ParameterError("kernel weights must be positive")
    _, full = _weighted_ridge(X, t, w, alpha)
    chosen = np.argsort(-np.abs(full), kind="stable")[:K]
    intercept, coef = _weighted_ridge(X[:, chosen], t, w, alpha)
    order = np.argsort(-np.abs(coef), kind="stable")
    chosen, coef = chosen[order], coef[order]
    r2 = _weighted_r2(X[:, chosen], t, w, intercept, coef)
    local = float(intercept + X[0, chosen] @ coef)
    return SurrogateFit(intercept, chosen, coef, r2, local)


@dataclass(frozen=True, eq=False)
class Explanation:
    """Class probabilities at the instance and the signed surrogate weights.

    ``feature_weights`` holds ``(name, weight, class)`` sorted by |weight|
    descending, where class is 1 for positive weights and 0 otherwise.
    """

    class_probabilities: tuple
    feature_weights: tuple
    intercept: float
    surrogate_r2: float
    local_prediction: float
    n_samples_used: int
    kernel_width: float
    feature_values: tuple = field(default=())

    def weights_by_name(self):
        return {name: w for name, w, _ in self.feature_weights}

    def to_dict(self):
        return {
            "class_probabilities": {CLASS_NAMES[c]: p for c, p in enumerate(self.class_probabilities)},
            "feature_weights": [
                {"feature": n, "weight": w, "class": c} for n, w, c in self.feature_weights
            ],
            "feature_values": dict(self.feature_values),
            "intercept": self.intercept,
            "surrogate_r2": self.surrogate_r2,
            "local_prediction": self.local_prediction,
            "n_samples": self.n_samples_used,
            "kernel_width": self.kernel_width,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def render_text(self):
        """Three sections: class probabilities, class-1 features, class-0 features."""
        p0, p1 = self.class_probabilities
        out = ["Prediction probabilities",
               f"  {'distrust (0)':<14}{p0:.2f}",
               f"  {'trust (1)':<14}{p1:.2f}",
               ""]
        values = dict(self.feature_values)
        for cls in (1, 0):
            out.append(f"Features supporting {CLASS_NAMES[cls]} ({cls})")
            rows = [(n, w) for n, w, c in self.feature_weights if c == cls]
            if not rows:
                out.append("  (none)")
            for name, w in rows:
                value = f"  [value {values[name]:.4f}]" if name in values else ""
                out.append(f"  {name:<36}{w:+.4f}{value}")
            out.append("")
        out.append(f"Surrogate: intercept {self.intercept:.4f}, local prediction "
                   f"{self.local_prediction:.4f}, weighted R^2 {self.surrogate_r2:.4f}")
        return "\n".join(out) + "\n"


def _proba_fn(model):
    """Normalise a model into ``X -> P(class 1)`` of shape (n,)."""
    if hasattr(model, "predict_proba"):
        def fn(X):
            p = np.asarray(model.predict_proba(X), dtype=float)
            return p[:, 1] if p.ndim == 2 else p
        return fn
    return lambda X: np.asarray(model(X), dtype=float).reshape(-1)


def explain(model, x, K=10, n_samples=DEFAULT_N_SAMPLES, seed=0, feature_names=None,
            kernel_width=None, train_stats=None, alpha=DEFAULT_RIDGE):
    """Explain the black box's class-1 probability around ``x``.

    ``model`` is either an object with ``predict_proba`` or a callable
    returning P(class 1) per row. ``x`` should live in standardized space.
    """
    x = np.asarray(x, dtype=float).ravel()
    names = list(feature_names) if feature_names is not None else [f"x{i + 1}" for i in range(x.size)]
    if len(names) != x.size:
        raise ParameterError(f"{len(names)} feature names for {x.size} features")
    width = default_kernel_width(x.size) if kernel_width is None else float(kernel_width)
    predict = _proba_fn(model)
    samples = perturb(x, n_samples, train_stats, seed)
    scale = _train_scale(train_stats, x.size)
    dist = np.sqrt(np.sum(((samples - x) / scale) ** 2, axis=1))
    weights = kernel_weight(dist, width)
    probs = predict(samples)
    fit = fit_surrogate(samples / scale, probs, weights, K, alpha)
    p1 = float(probs[0])
    feature_weights = tuple(
        (names[j], float(c), 1 if c > 0 else 0) for j, c in zip(fit.features, fit.coef)
    )
    return Explanation(
        class_probabilities=(1.0 - p1, p1),
        feature_weights=feature_weights,
        intercept=fit.intercept,
        surrogate_r2=fit.r2,
        local_prediction=fit.local_prediction,
        n_samples_used=int(n_samples),
        kernel_width=width,
        feature_values=tuple((names[j], float(x[j])) for j in fit.features),
    )


@dataclass(frozen=True, eq=False)
class FeatureInfluenceList:
    """Aggregate over explained records, sorted by mean |weight| descending.

    A feature absent from a record's top-K contributes 0 to its mean.
    """

    names: tuple
    scores: np.ndarray
    counts: np.ndarray
    n_records: int

    def ranked_names(self):
        return list(self.names)

    def to_rows(self):
        return [(n, float(s), int(c)) for n, s, c in zip(self.names, self.scores, self.counts)]


def _record_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def aggregate_influence(model, X, K=10, n_samples=DEFAULT_N_SAMPLES, seed=0, feature_names=None,
                        kernel_width=None, train_stats=None, n_jobs=1):
    """Explain every row of ``X`` and aggregate mean |weight| and top-K frequency.

    Row ``i`` uses a seed derived from ``(seed, i)`` so the result does not
    depend on evaluation order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ParameterError("need at least one record")
    names = list(feature_names) if feature_names is not None else [f"x{i + 1}" for i in range(X.shape[1])]
    explanations = Parallel(n_jobs=n_jobs)(
        delayed(explain)(model, X[i], K=K, n_samples=n_samples, seed=_record_seed(seed, i),
                         feature_names=names, kernel_width=kernel_width, train_stats=train_stats)
        for i in range(X.shape[0])
    )
    index = {n: j for j, n in enumerate(names)}
    totals = np.zeros(len(names))
    counts = np.zeros(len(names), dtype=np.int64)
    for exp in explanations:
        for name, w, _ in exp.feature_weights:
            totals[index[name]] += abs(w)
            counts[index[name]] += 1
    scores = totals / X.shape[0]
    order = np.lexsort((np.arange(len(names)), -counts, -scores))
    return FeatureInfluenceList(
        tuple(names[j] for j in order), scores[order], counts[order], X.shape[0]
    )


def combine_lists(lime_ranked, rfe_ranked, sizes, rfe_selected=None):
    """Feature combinations of the requested sizes from a LIME and an RFE ranking.

    For size ``s``: features both in LIME's top ``s`` and in the RFE
    selection come first (in LIME order), then the two rankings are
    alternated, LIME first, skipping names already taken.

    ``lime_ranked`` / ``rfe_ranked`` may be lists of names, a
    :class:`FeatureInfluenceList` and a :class:`~trustsense.rfe.RfeResult`.
    """
    if hasattr(lime_ranked, "ranked_names"):
        lime_ranked = lime_ranked.ranked_names()
    if hasattr(rfe_ranked, "ranked_names"):
        if rfe_selected is None:
            rfe_selected = rfe_ranked.selected
        rfe_ranked = rfe_ranked.ranked_names()
    lime_ranked, rfe_ranked = list(lime_ranked), list(rfe_ranked)
    selected = set(rfe_ranked if rfe_selected is None else rfe_selected)
    universe = len(set(lime_ranked) | set(rfe_ranked))
    combos = []
    for s in sizes:
        if not 1 <= s <= universe:
            raise ParameterError(f"combination size {s} outside 1..{universe}")
        combo = [n for n in lime_ranked[:s] if n in selected][:s]
        taken = set(combo)
        sources = [iter(lime_ranked), iter(rfe_ranked)]
        turn = 0
        while len(combo) < s:
            for name in sources[turn]:
                if name not in taken:
                    combo.append(name)
                    taken.add(name)
                    break
            turn = 1 - turn
        combos.append(combo)
    return combos
