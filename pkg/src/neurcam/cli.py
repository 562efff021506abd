"""Command-line surface: fit, predict, explain, eval, baseline-kmeans.

Config precedence for `fit`: built-in defaults < --config JSON file < explicit
CLI flags. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .config import KmeansConfig, TrainConfig
from .data import DualDataset, ScalerStats, load_csv, load_labels, standardize
from .errors import ConfigError, FormatError, NumericError, ParseError, ShapeError, StateError
from .explain import build_shape_graphs, export_shape_graphs
from .kmeans import inertia as kmeans_inertia, mbk_fit, nearest_centroid
from .metrics import PartitionPair, adjusted_rand, nmi, normalized_inertia, unsup_accuracy
from .model import assign, predict_hard
from .persist import load_model, save_model, save_report
from .trainer import TrainingAborted, fit_multi_seed

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _add_data_flags(p: argparse.ArgumentParser, need_xt: bool = True) -> None:
    p.add_argument("--x", required=True, help="interpretable features CSV")
    if need_xt:
        p.add_argument("--xt", help="transformed representation CSV (defaults to --x)")
    p.add_argument("--header", action="store_true", help="first CSV row holds column names")


def _load_dual(args, labels_path=None) -> tuple[DualDataset, list[str]]:
    x, names = load_csv(args.x, has_header=args.header)
    if names is None:
        names = [f"x{i}" for i in range(x.shape[1])]
    xt_path = getattr(args, "xt", None)
    xt = load_csv(xt_path, has_header=args.header)[0] if xt_path else x.copy()
    labels = load_labels(labels_path) if labels_path else None
    return DualDataset(x, xt, names, labels), names


_FIT_FLAG_TO_FIELD = {
    "k": "k",
    "gates": "c",
    "pair_gates": "p",
    "m": "m",
    "gamma": "gamma",
    "epochs": "total_epochs",
    "warmup": "warmup_epochs",
    "temper": "temper_epochs",
    "lr": "lr",
    "batch": "batch",
    "hidden": "hidden_dim",
    "basis": "b",
    "alpha": "alpha_entmax",
    "checkpoint_every": "checkpoint_every",
}


def _build_train_config(args) -> TrainConfig:
    values: dict = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config {args.config}: invalid JSON ({exc})") from None
    for flag, field_name in _FIT_FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[field_name] = v
    if args.seeds is not None:
        values["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    known = {f.name for f in dataclass_fields(TrainConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig.from_dict(values)


def cmd_fit(args) -> int:
    dataset, names = _load_dual(args)
    scaler_x = scaler_xt = None
    if args.standardize:
        xs, scaler_x = standardize(dataset.x_interp)
        dataset = DualDataset(xs, dataset.x_transformed, names, dataset.labels)
    if args.standardize_xt:
        xts, scaler_xt = standardize(dataset.x_transformed)
        dataset = DualDataset(dataset.x_interp, xts, names, dataset.labels)
    cfg = _build_train_config(args)
    cfg.validate()
    if args.checkpoint_dir:
        Path(args.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    model, report, all_reports = fit_multi_seed(dataset, cfg, checkpoint_dir=args.checkpoint_dir)
    save_model(
        args.out, model, cfg, seed=report.seed, feature_names=names,
        scaler_x=scaler_x, scaler_xt=scaler_xt,
    )
    report_path = args.report or (str(args.out) + ".report.json")
    save_report(
        report_path,
        {
            "best_seed": report.seed,
            "runs": [r.to_dict() for r in all_reports],
        },
    )
    print(f"inertia={report.final_inertia!r}")
    return 0


def _apply_scalers(persisted, x: np.ndarray, xt: np.ndarray | None):
    if x.shape[1] != len(persisted.feature_names):
        raise ShapeError(
            f"expected {len(persisted.feature_names)} feature columns, got {x.shape[1]}"
        )
    if persisted.scaler_x is not None:
        x = persisted.scaler_x.apply(x)
    if xt is not None and persisted.scaler_xt is not None:
        xt = persisted.scaler_xt.apply(xt)
    return x, xt


def cmd_predict(args) -> int:
    persisted = load_model(args.model)
    x, _ = load_csv(args.x, has_header=args.header)
    x, _ = _apply_scalers(persisted, x, None)
    if args.soft:
        w = assign(persisted.model, x)
        lines = [",".join(f"cluster_{c}" for c in range(w.shape[1]))]
        lines += [",".join(repr(float(v)) for v in row) for row in w]
    else:
        labels = predict_hard(persisted.model, x)
        lines = ["label"] + [str(int(v)) for v in np.atleast_1d(labels)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_explain(args) -> int:
    persisted = load_model(args.model)
    x, names = load_csv(args.x, has_header=args.header)
    x, _ = _apply_scalers(persisted, x, None)
    dataset = DualDataset(x, x, persisted.feature_names)
    shapes = build_shape_graphs(persisted.model, dataset, grid_points=args.grid_points)
    manifest = export_shape_graphs(shapes, dataset, args.out_dir)
    print(f"manifest={manifest}")
    return 0


def _print_eval_block(model, x, xt, labels) -> None:
    pred = predict_hard(model, x)
    pair = PartitionPair.from_labels(labels, pred)
    print(f"ari={adjusted_rand(pair)!r}")
    print(f"nmi={nmi(pair)!r}")
    print(f"acc={unsup_accuracy(pair)!r}")
    print(f"inertia={normalized_inertia(model, x, xt)!r}")


def cmd_eval(args) -> int:
    persisted = load_model(args.model)
    x, _ = load_csv(args.x, has_header=args.header)
    xt = load_csv(args.xt, has_header=args.header)[0] if args.xt else x.copy()
    x, xt = _apply_scalers(persisted, x, xt)
    labels = load_labels(args.labels)
    if labels.size != x.shape[0]:
        raise ShapeError(f"{labels.size} labels for {x.shape[0]} rows")
    _print_eval_block(persisted.model, x, xt, labels)
    return 0


def cmd_baseline_kmeans(args) -> int:
    xt, _ = load_csv(args.xt, has_header=args.header)
    cfg = KmeansConfig(
        k=args.k, seed=args.seed, n_init=args.n_init, batch_size=args.batch_size
    )
    centers, total = mbk_fit(xt, cfg)
    print(f"restarts={cfg.n_init}")
    print(f"inertia={total / xt.shape[0]!r}")
    if args.labels:
        labels = load_labels(args.labels)
        pred, _ = nearest_centroid(xt, centers)
        pair = PartitionPair.from_labels(labels, pred)
        print(f"ari={adjusted_rand(pair)!r}")
        print(f"nmi={nmi(pair)!r}")
        print(f"acc={unsup_accuracy(pair)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurcam", description="Interpretable fuzzy clustering with gated additive models"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="train a model (multi-seed, min-inertia selection)")
    _add_data_flags(p_fit)
    p_fit.add_argument("--out", required=True, help="model file to write")
    p_fit.add_argument("--report", help="training report path (default: <out>.report.json)")
    p_fit.add_argument("--config", help="JSON file with TrainConfig fields")
    p_fit.add_argument("--k", type=int)
    p_fit.add_argument("--gates", type=int, help="number of single-feature shape functions")
    p_fit.add_argument("--pair-gates", dest="pair_gates", type=int)
    p_fit.add_argument("--m", type=float)
    p_fit.add_argument("--gamma", type=float)
    p_fit.add_argument("--seeds", help="comma-separated training seeds")
    p_fit.add_argument("--epochs", type=int, help="total epochs")
    p_fit.add_argument("--warmup", type=int)
    p_fit.add_argument("--temper", type=int, help="tempering epochs per gate bank")
    p_fit.add_argument("--lr", type=float)
    p_fit.add_argument("--batch", type=int)
    p_fit.add_argument("--hidden", type=int)
    p_fit.add_argument("--basis", type=int)
    p_fit.add_argument("--alpha", type=float, help="entmax alpha")
    p_fit.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p_fit.add_argument("--checkpoint-dir", dest="checkpoint_dir", help="write periodic checkpoints here")
    p_fit.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    p_fit.add_argument("--standardize-xt", action="store_true", default=False)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="assign clusters with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--x", required=True)
    p_pred.add_argument("--header", action="store_true")
    p_pred.add_argument("--soft", action="store_true", help="emit fuzzy weights instead of labels")
    p_pred.add_argument("--out")
    p_pred.set_defaults(func=cmd_predict)

    p_exp = sub.add_parser("explain", help="export shape graphs and importance")
    p_exp.add_argument("--model", required=True)
    p_exp.add_argument("--x", required=True, help="training CSV for densities")
    p_exp.add_argument("--header", action="store_true")
    p_exp.add_argument("--out-dir", required=True)
    p_exp.add_argument("--grid-points", type=int, default=256)
    p_exp.set_defaults(func=cmd_explain)

    p_eval = sub.add_parser("eval", help="external metrics against ground truth")
    p_eval.add_argument("--model", required=True)
    _add_data_flags(p_eval)
    p_eval.add_argument("--labels", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_km = sub.add_parser("baseline-kmeans", help="mini-batch k-means reference clustering")
    p_km.add_argument("--xt", required=True)
    p_km.add_argument("--k", type=int, required=True)
    p_km.add_argument("--labels")
    p_km.add_argument("--header", action="store_true")
    p_km.add_argument("--seed", type=int, default=0)
    p_km.add_argument("--n-init", dest="n_init", type=int, default=5)
    p_km.add_argument("--batch-size", dest="batch_size", type=int, default=512)
    p_km.set_defaults(func=cmd_baseline_kmeans)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ParseError, FormatError, StateError, NumericError, TrainingAborted, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
