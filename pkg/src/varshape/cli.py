"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error. All randomness flows
from --seed, and reruns with the same flags produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import datasets, model as mdl, train as tr
from .errors import DimensionMismatch, SchemaError, VarshapeError
from .mesh import all_triangle_geometry, scale_mesh
from .meshio import load_mesh


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 (argparse default is 2, which we reserve for data errors)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from exc


def _levels(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad levels {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="varshape", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="generate a rotated synthetic-shape dataset")
    p.add_argument("--kind", default="blob", choices=["ellipsoid", "torus", "bumped_box", "blob"])
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--mode", choices=["axis", "full"], default="axis")
    p.add_argument("--axis", choices=["x", "y", "z"], default="z")
    p.add_argument("--angle-max-deg", type=float, default=360.0,
                   help="axis mode samples angles uniformly in [0, this) degrees")
    p.add_argument("--resolution", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest-mnist", help="convert IDX digit images to closed meshes")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--height-scale", type=float, default=datasets.DIGIT_HEIGHT_SCALE)
    p.add_argument("--threshold", type=float, default=datasets.DIGIT_THRESHOLD)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a manifest dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None,
                   help="JSON file with TrainConfig fields; explicit flags override it")
    p.add_argument("--dims", type=_dims, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--split", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--representation", choices=list(tr.REPRESENTATIONS), default=None)
    p.add_argument("--normalize-mass", action="store_true", default=None,
                   help="normalize every measure to the training-set mean mass")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="optional CSV path")

    p = sub.add_parser("robustness", help="metric under increasing mesh perturbation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--perturbation", choices=["remove_faces", "decimate"], required=True)
    p.add_argument("--levels", type=_levels, required=True)
    p.add_argument("--rescale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="compare varifold vs marginal representations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize-mass", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect-h", help="dump learned test-function values per face")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("info", help="print checkpoint summary")
    p.add_argument("--checkpoint", required=True)
    return parser


def _cmd_synth(args) -> int:
    path = datasets.synth_rotation_dataset(
        args.kind, args.n_samples, args.mode, args.seed, args.out,
        axis=args.axis, resolution=args.resolution,
        angle_max=np.radians(args.angle_max_deg),
    )
    print(f"wrote {path}")
    return 0


def _cmd_ingest(args) -> int:
    path = datasets.ingest_mnist(
        args.images, args.labels, args.count, args.height_scale, args.threshold, args.out
    )
    print(f"wrote {path}")
    return 0


def _train_config(args, dataset) -> tr.TrainConfig:
    return tr.TrainConfig(
        dims=args.dims,
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        split_fraction=args.split,
        mass_target="mean" if args.normalize_mass else None,
        representation=dataset.representation,
    )


_TRAIN_DEFAULTS = {
    "dims": None,
    "lr": 0.005,
    "epochs": 100,
    "batch_size": 32,
    "split_fraction": 0.8,
    "seed": 0,
    "representation": "varifold",
    "mass_target": None,
}


def _resolve_train_settings(args) -> dict:
    """Defaults, then the --config JSON file, then explicit flags."""
    settings = dict(_TRAIN_DEFAULTS)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"config is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(settings)
        if unknown:
            raise SchemaError(f"unknown config fields {sorted(unknown)}")
        settings.update(file_cfg)
    overrides = {
        "dims": args.dims,
        "lr": args.lr,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "split_fraction": args.split,
        "seed": args.seed,
        "representation": args.representation,
        "mass_target": "mean" if args.normalize_mass else None,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if settings["dims"] is None:
        raise SchemaError("dims required (pass --dims or put it in --config)")
    settings["dims"] = tuple(int(d) for d in settings["dims"])
    return settings


def _evaluate(model, dataset) -> tr.Metrics:
    if dataset.label_kind == "class":
        return tr.evaluate_classification(model, dataset)
    return tr.evaluate_regression(model, dataset, dataset.label_kind)


def _print_metrics(metrics: tr.Metrics, prefix: str = "") -> None:
    if metrics.accuracy is not None:
        print(f"{prefix}accuracy {metrics.accuracy:.4f}")
    else:
        print(f"{prefix}mean_error {metrics.mean_error:.4f} deg  r2 {metrics.r2:.4f}")


def _cmd_train(args) -> int:
    settings = _resolve_train_settings(args)
    dataset = datasets.dataset_from_manifest(args.manifest, settings["representation"])
    config = tr.TrainConfig(**settings)
    train_set, test_set = tr.split(dataset, config.split_fraction, config.seed)
    if dataset.label_kind == "class":
        model, metrics = tr.train_classification(train_set, config)
    else:
        model, metrics = tr.train_regression(train_set, config)
    manifest = datasets.load_manifest(args.manifest)
    model.meta["coord_scale"] = float(manifest.get("params", {}).get("coord_scale", 1.0))
    os.makedirs(args.out, exist_ok=True)
    mdl.save_checkpoint(model, os.path.join(args.out, "checkpoint.json"))
    tr.write_metrics_csv(metrics, os.path.join(args.out, "metrics.csv"))
    final = _evaluate(model, test_set)
    tr.write_eval_csv(final, os.path.join(args.out, "eval.csv"))
    print(f"trained {len(train_set)} items for {config.epochs} epochs "
          f"({metrics.wall_clock:.1f} s), test set {len(test_set)} items")
    _print_metrics(final, "test ")
    return 0


def _cmd_eval(args) -> int:
    model = mdl.load_checkpoint(args.checkpoint)
    rep = model.meta.get("representation", "varifold")
    dataset = datasets.dataset_from_manifest(args.manifest, rep)
    metrics = _evaluate(model, dataset)
    _print_metrics(metrics)
    if args.out:
        tr.write_eval_csv(metrics, args.out)
    return 0


def _cmd_robustness(args) -> int:
    model = mdl.load_checkpoint(args.checkpoint)
    rep = model.meta.get("representation", "varifold")
    dataset = datasets.dataset_from_manifest(args.manifest, rep)
    rows = tr.robustness_sweep(
        model, dataset, args.perturbation, args.levels, args.rescale, seed=args.seed
    )
    tr.write_sweep_csv(rows, args.out)
    for row in rows:
        print(",".join(f"{k}={v}" for k, v in row.items()))
    return 0


def _cmd_ablate(args) -> int:
    dataset = datasets.dataset_from_manifest(args.manifest)
    config = _train_config(args, dataset)
    results = tr.ablate_representation(dataset, config)
    with open(args.out, "w", encoding="utf-8") as fh:
        if dataset.label_kind == "class":
            fh.write("representation,accuracy\n")
            for rep, m in results.items():
                fh.write(f"{rep},{m.accuracy!r}\n")
        else:
            fh.write("representation,mean_error,r2\n")
            for rep, m in results.items():
                fh.write(f"{rep},{m.mean_error!r},{m.r2!r}\n")
    for rep, m in results.items():
        _print_metrics(m, f"{rep} ")
    return 0


def _cmd_inspect_h(args) -> int:
    model = mdl.load_checkpoint(args.checkpoint)
    if model.mlp.in_dim != 6:
        raise DimensionMismatch(
            f"surface meshes need a checkpoint with input width 6, got {model.mlp.in_dim}"
        )
    mesh = load_mesh(args.mesh)
    scale = float(model.meta.get("coord_scale", 1.0))
    if scale != 1.0:
        mesh = scale_mesh(mesh, scale)
    centers, normals, _, valid = all_triangle_geometry(mesh)
    rows = np.concatenate([centers[valid], normals[valid]], axis=1)
    values = mdl.forward_batch(model.mlp, rows)
    indices = np.nonzero(valid)[0]
    with open(args.out, "w", encoding="utf-8") as fh:
        header = ",".join(f"h_{k}" for k in range(values.shape[1]))
        fh.write(f"face_index,{header}\n")
        for i, v in zip(indices, values):
            fh.write(f"{i}," + ",".join(repr(float(x)) for x in v) + "\n")
    print(f"wrote {len(indices)} rows to {args.out}")
    return 0


def _cmd_info(args) -> int:
    model = mdl.load_checkpoint(args.checkpoint)
    dims = model.mlp.dims
    print(f"dims {list(dims)}")
    print(f"param_count {mdl.param_count(dims)} "
          f"(+{dims[-1]} output bias = {mdl.param_count_with_bias(dims)})")
    print(f"lipschitz_upper_bound {mdl.lipschitz_upper_bound(model.mlp)!r}")
    for key in ("seed", "epochs", "representation", "label_kind", "mass_target", "coord_scale"):
        if key in model.meta:
            print(f"meta.{key} {model.meta[key]}")
    return 0


_COMMANDS = {
    "synth-data": _cmd_synth,
    "ingest-mnist": _cmd_ingest,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "robustness": _cmd_robustness,
    "ablate": _cmd_ablate,
    "inspect-h": _cmd_inspect_h,
    "info": _cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except VarshapeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
