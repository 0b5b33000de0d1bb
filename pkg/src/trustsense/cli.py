"""Command-line entry point: ``trustsense <subcommand> [flags]``.

Exit status is 0 on success, 2 on a usage error and 1 when a stage fails
on its data or inputs.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import schema
from .dataset import ScalerParams, balance_downsample, load_csv, standardize_apply, standardize_fit
from .dataset import subject_split, write_csv
from .evaluation import holdout_evaluate, kfold_evaluate, render_report
from .exceptions import ParameterError, TrustSenseError
from .lime import aggregate_influence, combine_lists, explain
from .mlp import build, load_model, model_spec, predict_proba, save_model, train
from .rfe import rfe_select, rfe_sweep, write_sweep_csv
from .synth import SynthesisSpec, load_synthesis_config, synth_corpus


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"{stage}: {cause}")


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def _range(text):
    lo, sep, hi = text.partition("..")
    try:
        lo, hi = int(lo), int(hi if sep else lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW..HIGH, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    return range(lo, hi + 1)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", help="input CSV")
    p.add_argument("--output", help="output file or directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", type=int, choices=(1, 2), default=2, help="architecture")
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--epochs", type=int, default=130)
    p.add_argument("--optimizer", choices=("adam", "rmsprop"),
                   help="default: rmsprop for model 1, adam for model 2")
    p.add_argument("--k", type=int, default=10, help="cross-validation folds")
    p.add_argument("--n-features", type=_positive_int, default=12, help="RFE target size")
    p.add_argument("--lime-samples", type=int, default=5000)
    p.add_argument("--lime-k", type=_positive_int, default=10)
    p.add_argument("--kernel-width", type=float)
    p.add_argument("--features-file", help="feature subset, one name per line")
    p.add_argument("--sizes", type=_sizes, default=[4, 10, 12], help="combination sizes")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return p


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="trustsense", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic feature CSV")
    p.add_argument("--n", type=int, default=2000, help="records per class")
    p.add_argument("--subjects", type=_positive_int, default=45)
    p.add_argument("--synth-config", help="key = value synthesis parameters")

    sub.add_parser("train", parents=[common], help="train an MLP and save it as JSON")

    p = sub.add_parser("evaluate", parents=[common], help="k-fold or holdout metrics report")
    p.add_argument("--holdout", action="store_true", help="subject-wise train/validation split")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--global-standardize", action="store_true",
                   help="fit the scaler once on all rows instead of per fold")

    p = sub.add_parser("select", parents=[common], help="RFE + LIME feature combinations")
    p.add_argument("--lime-records", type=_positive_int, default=100)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--sweep", type=_range, help="also cross-validate RFE sizes, e.g. 4..12")

    p = sub.add_parser("explain", parents=[common], help="explain one record of --input")
    p.add_argument("--model-file", required=True, help="model JSON written by 'train'")
    p.add_argument("--record-index", type=int,
                   help="row to explain; default: seeded pick from the validation subjects")
    p.add_argument("--train-fraction", type=float, default=0.7)

    p = sub.add_parser("pipeline", parents=[common], help="synth, train, select, evaluate, explain")
    p.add_argument("--n", type=int, default=2000, help="records per class")
    p.add_argument("--subjects", type=_positive_int, default=45)
    p.add_argument("--synth-config")
    p.add_argument("--lime-records", type=_positive_int, default=100)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--holdout", action="store_true")
    p.add_argument("--global-standardize", action="store_true")
    return parser


def _spec(args):
    overrides = dict(learning_rate=args.learning_rate, batch_size=args.batch_size,
                     epochs=args.epochs, dropout_rate=args.dropout, seed=args.seed)
    if args.optimizer:
        overrides["optimizer"] = args.optimizer
    return model_spec(args.model, **overrides)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for this subcommand")


def _load(args, columns=None):
    if args.features_file and columns is None:
        columns = schema.read_feature_list(args.features_file)
    return load_csv(args.input, columns=columns)


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_synth(args, out=None):
    out = out or args.output
    _require(args, "output")
    if args.n < 1:
        raise StageError("synth", ParameterError(f"--n must be at least 1, got {args.n}"))
    spec = SynthesisSpec()
    if args.synth_config:
        spec = load_synthesis_config(args.synth_config)
    table = synth_corpus(spec, args.n, n_subjects=args.subjects, seed=args.seed)
    write_csv(table, out)
    n0, n1 = table.class_counts()
    print(f"synth: wrote {len(table)} rows ({n1} trust, {n0} distrust, "
          f"{table.n_features} features, {len(set(table.subjects.tolist()))} subjects) to {out}")
    return out


def cmd_train(args, data=None, out=None):
    out = out or args.output
    _require(args, "input", "output")
    table = data if data is not None else _load(args)
    table = balance_downsample(table, seed=args.seed)
    params = standardize_fit(table)
    X = standardize_apply(params, table).X
    spec = _spec(args)
    model = build(spec, X.shape[1])
    report = train(model, X, table.y, spec)
    save_model(model, out, extra={
        "features": list(table.columns),
        "scaler": json.loads(params.to_json()),
    })
    print(f"train: model {args.model} on {len(table)} rows x {X.shape[1]} features, "
          f"final loss {report.losses[-1] if report.losses else float('nan'):.4f}, "
          f"train accuracy {100 * report.train_accuracy:.2f}% -> {out}")
    return out


def cmd_evaluate(args, out=None):
    _require(args, "input")
    table = balance_downsample(_load(args), seed=args.seed)
    spec = _spec(args)
    if args.holdout:
        plan = subject_split(table, args.train_fraction, seed=args.seed)
        summary = holdout_evaluate(table.take(plan.train_rows), table.take(plan.validation_rows), spec)
    else:
        summary = kfold_evaluate(table, spec, k=args.k, seed=args.seed,
                                 per_fold_standardize=not args.global_standardize)
    text = render_report(summary, args.format)
    _write_text(out or args.output, text)
    return text


def _split_standardized(table, args):
    plan = subject_split(table, args.train_fraction, seed=args.seed)
    train_t = table.take(plan.train_rows)
    params = standardize_fit(train_t)
    return plan, params, standardize_apply(params, train_t), standardize_apply(
        params, table.take(plan.validation_rows))


def cmd_select(args, out_dir=None):
    out_dir = out_dir or args.output
    _require(args, "input", "output")
    os.makedirs(out_dir, exist_ok=True)
    table = balance_downsample(_load(args), seed=args.seed)
    _, _, train_t, val_t = _split_standardized(table, args)

    rfe = rfe_select(train_t, args.n_features)
    _write_text(os.path.join(out_dir, "rfe.json"), rfe.to_json() + "\n")

    spec = _spec(args)
    model = build(spec, train_t.n_features)
    train(model, train_t.X, train_t.y, spec)
    rng = np.random.default_rng(args.seed)
    n_rec = min(args.lime_records, len(val_t))
    rows = np.sort(rng.choice(len(val_t), size=n_rec, replace=False))
    influence = aggregate_influence(
        lambda X: predict_proba(model, X), val_t.X[rows], K=args.lime_k,
        n_samples=args.lime_samples, seed=args.seed, feature_names=train_t.columns,
        kernel_width=args.kernel_width,
    )
    lines = ["feature,mean_abs_weight,top_k_count"]
    lines += [f"\"{n}\",{s!r},{c}" for n, s, c in influence.to_rows()]
    _write_text(os.path.join(out_dir, "lime_influence.csv"), "\n".join(lines) + "\n")

    combos = combine_lists(influence, rfe, args.sizes)
    paths = []
    for i, combo in enumerate(combos, start=1):
        path = os.path.join(out_dir, f"combination_{i}.txt")
        schema.write_feature_list(path, combo)
        paths.append(path)
    if getattr(args, "sweep", None):
        rows = rfe_sweep(train_t, args.sweep, estimator=spec, k=args.k, seed=args.seed)
        write_sweep_csv(rows, os.path.join(out_dir, "rfe_sweep.csv"))
    common = sorted(set(rfe.selected) & set(influence.names[: args.lime_k]))
    print(f"select: RFE kept {len(rfe.selected)}, LIME over {n_rec} records, "
          f"{len(common)} shared; combinations of sizes {args.sizes} -> {out_dir}")
    return paths


def _pick_record(table, args):
    if args.record_index is not None:
        if not 0 <= args.record_index < len(table):
            raise StageError("explain", ParameterError(
                f"--record-index {args.record_index} outside 0..{len(table) - 1}"))
        return args.record_index
    plan = subject_split(table, args.train_fraction, seed=args.seed)
    return int(np.random.default_rng(args.seed).choice(plan.validation_rows))


def cmd_explain(args, out=None):
    _require(args, "input")
    model, payload = load_model(args.model_file)
    features = payload.get("features")
    table = load_csv(args.input, columns=features)
    params = ScalerParams.from_json(json.dumps(payload["scaler"]))
    X = standardize_apply(params, table).X
    idx = _pick_record(table, args)
    exp = explain(lambda Z: predict_proba(model, Z), X[idx], K=args.lime_k,
                  n_samples=args.lime_samples, seed=args.seed, feature_names=table.columns,
                  kernel_width=args.kernel_width)
    header = f"Record {idx} (subject {int(table.subjects[idx])}, true label {int(table.y[idx])})\n\n"
    text = exp.to_json() if args.format == "json" else header + exp.render_text()
    _write_text(out or args.output, text)
    return text


def cmd_pipeline(args):
    _require(args, "output")
    out = args.output
    os.makedirs(out, exist_ok=True)
    data = os.path.join(out, "data.csv")
    model_path = os.path.join(out, "model.json")
    ext = "json" if args.format == "json" else "txt"
    _run("synth", cmd_synth, args, out=data)
    args.input = data
    _run("train", cmd_train, args, out=model_path)
    _run("select", cmd_select, args, out_dir=os.path.join(out, "selection"))
    _run("evaluate", cmd_evaluate, args, out=os.path.join(out, f"report.{ext}"))
    args.model_file = model_path
    args.record_index = None
    _run("explain", cmd_explain, args, out=os.path.join(out, f"explanation.{ext}"))
    print(f"pipeline: artifacts in {out}")


def _run(stage, fn, args, **kwargs):
    try:
        return fn(args, **kwargs)
    except (StageError, UsageError):
        raise
    except (TrustSenseError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise StageError(stage, exc) from exc


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "select": cmd_select,
    "explain": cmd_explain,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "pipeline":
            cmd_pipeline(args)
        else:
            _run(args.command, COMMANDS[args.command], args)
    except UsageError as exc:
        parser.error(str(exc))
    except StageError as exc:
        print(f"trustsense: error in {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
