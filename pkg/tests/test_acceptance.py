"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line detail with ``record_property("detail", ...)``;
``conftest.py`` prints a PASS/FAIL line per criterion after the run.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from trustsense import schema
from trustsense.cli import main
from trustsense.dataset import FeatureTable, load_csv, subject_split
from trustsense.evaluation import (
    ConfusionMatrix,
    f1_score,
    holdout_evaluate,
    kfold_evaluate,
    metrics,
    render_report,
)
from trustsense.lime import explain
from trustsense.mlp import DROPOUT, ModelSpec, build, classify, gradient_check, model_1, model_2, train
from trustsense.rfe import rfe_select
from trustsense.synth import SynthesisSpec, synth_corpus

pytestmark = pytest.mark.slow

CORPUS_SEED = 7
CV_SEED = 0


@pytest.fixture(scope="session")
def corpus():
    start = time.perf_counter()
    table = synth_corpus(SynthesisSpec(), 2000, seed=CORPUS_SEED)
    return table, time.perf_counter() - start


def cv_table_report(table):
    return render_report(kfold_evaluate(table, model_2(seed=CV_SEED), k=10, seed=CV_SEED))


@pytest.fixture(scope="session")
def cv_report(corpus):
    table, synth_time = corpus
    start = time.perf_counter()
    text = cv_table_report(table)
    return text, synth_time + time.perf_counter() - start


@pytest.fixture(scope="session")
def cli_artifacts(tmp_path_factory):
    """Run synth, train, select, explain and a reference-subset holdout evaluate through the CLI."""

    def run(root):
        data = root / "data.csv"
        model = root / "model.json"
        sel = root / "selection"
        reference = root / "reference.txt"
        codes = [
            main(["synth", "--n", "200", "--subjects", "20", "--seed", "7", "--output", str(data)]),
            main(["train", "--input", str(data), "--output", str(model), "--seed", "7"]),
            main(["select", "--input", str(data), "--output", str(sel), "--seed", "7",
                  "--sizes", "4,10,12", "--lime-records", "20"]),
            main(["explain", "--input", str(data), "--model-file", str(model), "--seed", "7",
                  "--output", str(root / "explanation.txt")]),
        ]
        schema.write_feature_list(reference, schema.REFERENCE_FEATURES)
        codes.append(main(["evaluate", "--input", str(data), "--features-file", str(reference),
                           "--holdout", "--seed", "7", "--output", str(root / "holdout.txt")]))
        return codes

    first = tmp_path_factory.mktemp("run1")
    second = tmp_path_factory.mktemp("run2")
    return (first, run(first)), (second, run(second))


@pytest.mark.criterion(1, "Gradient correctness")
def test_gradient_correctness(record_property):
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    errors = []
    for seed in range(20):
        width = int(rng.integers(2, 6))
        layers = tuple(int(h) for h in rng.integers(2, 6, size=int(rng.integers(1, 3))))
        if seed % 2:
            layers = layers[:1] + (DROPOUT,) + layers[1:]
        model = build(ModelSpec(layers=layers, seed=seed), width)
        # Zero biases put z exactly on the relu kink whenever every upstream unit is
        # off; random biases keep the check at a differentiable point.
        for b in model.biases:
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        X = rng.normal(size=(8, width))
        y = rng.integers(0, 2, 8).astype(float)
        errors.append(gradient_check(model, X, y))
    elapsed = time.perf_counter() - start
    worst = max(errors)
    record_property("detail", f"max relative error {worst:.2e} over 20 models (< 1e-5), {elapsed:.1f}s (< 30s)")
    assert worst < 1e-5
    assert elapsed < 30


@pytest.mark.criterion(2, "Learnability")
def test_learnability(record_property):
    start = time.perf_counter()
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    xor_model = build(model_1(epochs=2000), 2)
    train(xor_model, X, y)
    xor_acc = float(np.mean(classify(xor_model, X) == y))

    rng = np.random.default_rng(0)
    labels = np.arange(200) % 2
    blob = rng.normal(size=(200, 2)) * 0.5 + np.where(labels[:, None] == 1, 2.5, -2.5)
    blob_model = build(model_2(), 2)
    blob_acc = train(blob_model, blob, labels).train_accuracy
    elapsed = time.perf_counter() - start
    record_property("detail", f"Model 1 XOR accuracy {100 * xor_acc:.0f}% (2000 epochs), "
                              f"Model 2 blob training accuracy {100 * blob_acc:.1f}% (>= 99%), {elapsed:.1f}s (< 60s)")
    assert xor_acc == 1.0
    assert blob_acc >= 0.99
    assert elapsed < 60


@pytest.mark.criterion(3, "Synthetic end-to-end")
def test_synthetic_end_to_end(cv_report, record_property):
    text, elapsed = cv_report
    lines = text.splitlines()
    mean_acc = float(lines[2].split()[1])
    record_property("detail", f"10-fold mean accuracy {mean_acc:.2f}% on 4000 records (>= 90%), "
                              f"{elapsed:.0f}s (< 300s)")
    print(text)
    assert lines[0].split() == ["Accuracy", "F1", "Score", "Recall", "Precision"]
    assert [ln.split()[0] for ln in lines[1:]] == ["Max", "Mean", "Min", "SD"]
    for ln in lines[1:]:
        assert all(len(v.split(".")[1]) == 2 for v in ln.split()[1:])
    assert mean_acc >= 90.0
    assert elapsed < 300


@pytest.mark.criterion(4, "RFE recovery")
def test_rfe_recovery(record_property):
    start = time.perf_counter()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((1000, 22))
        y = (3 * X[:, 0] - 2 * X[:, 1] + rng.standard_normal(1000) > 0).astype(int)
        names = ["x1", "x2"] + [f"noise{i}" for i in range(20)]
        result = rfe_select(FeatureTable(X, y, np.arange(1000), names), 2)
        hits += set(result.selected) == {"x1", "x2"}
    elapsed = time.perf_counter() - start
    record_property("detail", f"planted pair recovered in {hits}/100 seeds (>= 95), {elapsed:.1f}s (< 120s)")
    assert hits >= 95
    assert elapsed < 120


def _lime_trial(seed, n_features=10, K=4):
    rng = np.random.default_rng(seed)
    coef = np.zeros(n_features)
    informative = rng.choice(n_features, size=K, replace=False)
    coef[informative] = rng.uniform(0.02, 0.06, K) * rng.choice([-1, 1], K)

    def black_box(Z):
        return np.clip(0.5 + Z @ coef, 0.0, 1.0)

    x = rng.normal(size=n_features)
    exp = explain(black_box, x, K=K, n_samples=2000, seed=seed)
    idx = [int(name[1:]) - 1 for name, _, _ in exp.feature_weights]
    got = np.array([w for _, w, _ in exp.feature_weights])
    want = coef[idx]
    if set(idx) != set(informative.tolist()) or np.any(np.sign(got) != np.sign(want)):
        return False
    rel_got = got / np.max(np.abs(got))
    rel_want = want / np.max(np.abs(want))
    return bool(np.all(np.abs(rel_got - rel_want) <= 0.10 * np.abs(rel_want)))


@pytest.mark.criterion(5, "LIME fidelity oracle")
def test_lime_fidelity(record_property):
    start = time.perf_counter()
    passed = sum(_lime_trial(seed) for seed in range(100))
    const = explain(lambda Z: np.full(len(Z), 0.7), np.zeros(10), K=10, n_samples=2000, seed=0)
    worst_const = max(abs(w) for _, w, _ in const.feature_weights)
    elapsed = time.perf_counter() - start
    record_property("detail", f"{passed}/100 linear trials matched (>= 95); constant box max |weight| "
                              f"{worst_const:.1e} (< 1e-6), {elapsed:.1f}s (< 120s)")
    assert passed >= 95
    assert worst_const < 1e-6
    assert elapsed < 120


@pytest.mark.criterion(6, "Metrics oracle")
def test_metrics_oracle(record_property):
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 100))
        t = rng.integers(0, 2, n)
        p = rng.integers(0, 2, n)
        tp = sum(1 for a, b in zip(t, p) if a == 1 and b == 1)
        fp = sum(1 for a, b in zip(t, p) if a == 0 and b == 1)
        fn = sum(1 for a, b in zip(t, p) if a == 1 and b == 0)
        tn = n - tp - fp - fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * ((prec * rec) / (prec + rec)) if prec + rec else 0.0
        got = metrics(ConfusionMatrix.from_predictions(t, p))
        mismatches += tuple(got) != ((tp + tn) / n, prec, rec, f1)
    # Dyadic rationals i/64: products and sums are exact, so the formula rounds once.
    f1_mismatches = 0
    grid = [i / 64 for i in range(65)]
    for a in grid:
        for b in grid:
            want = 0.0 if a + b == 0 else float(2 * Fraction(a) * Fraction(b) / (Fraction(a) + Fraction(b)))
            f1_mismatches += f1_score(a, b) != want
    record_property("detail", f"{mismatches} mismatches over 1000 confusion fixtures; "
                              f"{f1_mismatches} F1 bit mismatches over {len(grid) ** 2} dyadic pairs")
    assert mismatches == 0
    assert f1_mismatches == 0


@pytest.mark.criterion(7, "Pipeline fidelity artifacts")
def test_pipeline_artifacts(cli_artifacts, record_property):
    (root, codes), _ = cli_artifacts
    text = (root / "explanation.txt").read_text()
    sections = [h for h in ("Prediction probabilities", "Features supporting trust (1)",
                            "Features supporting distrust (0)") if h in text]
    probs = [float(ln.split()[-1]) for ln in text.splitlines()
             if ln.strip().startswith(("distrust (0)", "trust (1)"))]
    sizes = [len(schema.read_feature_list(root / "selection" / f"combination_{i}.txt")) for i in (1, 2, 3)]

    table = load_csv(root / "data.csv")
    plan = subject_split(table, 0.7, seed=7)
    summary = holdout_evaluate(table.take(plan.train_rows), table.take(plan.validation_rows),
                               model_2(seed=7), feature_subset=list(schema.REFERENCE_FEATURES))
    holdout_acc = summary.aggregate("accuracy", "mean")
    record_property("detail", f"exit codes {codes}; explanation sections {len(sections)}/3 with P0+P1="
                              f"{sum(probs):.2f}; combination sizes {sizes}; reference-subset holdout accuracy "
                              f"{100 * holdout_acc:.2f}%")
    assert codes == [0] * 5
    assert len(sections) == 3
    assert len(probs) == 2 and abs(sum(probs) - 1.0) <= 0.01  # two-decimal rendering
    assert sizes == [4, 10, 12]
    assert (root / "holdout.txt").read_text().splitlines()[2].startswith("Mean")


@pytest.mark.criterion(8, "Determinism")
def test_determinism(corpus, cv_report, cli_artifacts, record_property):
    (first, _), (second, _) = cli_artifacts
    names = ["data.csv", "model.json", "explanation.txt", "holdout.txt", "selection/rfe.json",
             "selection/lime_influence.csv"] + [f"selection/combination_{i}.txt" for i in (1, 2, 3)]
    differing = [n for n in names if (first / n).read_bytes() != (second / n).read_bytes()]

    fresh = synth_corpus(SynthesisSpec(), 2000, seed=CORPUS_SEED)
    same_corpus = np.array_equal(fresh.X, corpus[0].X)
    same_report = cv_table_report(fresh) == cv_report[0]
    record_property("detail", f"{len(names) - len(differing)}/{len(names)} CLI artifacts byte-identical; "
                              f"4000-record corpus identical: {same_corpus}; "
                              f"10-fold report identical: {same_report}")
    assert not differing, differing
    assert same_corpus
    assert same_report
