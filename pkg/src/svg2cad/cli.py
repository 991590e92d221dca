"""Command-line surface: data generation, ingestion, training, evaluation.

Configuration precedence for ``train``: built-in profile defaults, then the
--config file, then repeated --set key=value flags, then D2C_SEED for seeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .cad import CadError, sequence_from_text, sequence_to_text
from .config import ConfigError, apply_overrides, parse_config_file, resolve_seed
from .drawing import ViewLabel
from .kernel import InvalidityReason, reconstruct, sample_shape, save_points
from .metrics import report_to_text
from .model import ModelConfig, views_to_arrays
from .records import SampleRecord, read_records, write_records
from .svg_ingest import drawing_from_svg
from .synth import GenSpec, generate_dataset, write_view_svgs
from .training import (
    TrainConfig,
    Trainer,
    desk_model_config,
    desk_train_config,
    evaluate_checkpoint,
    resume_trainer,
    split_dataset,
)


def _fail(message: str) -> "NoReturn":  # noqa: F821
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(1)


def _split_known_keys(values: dict) -> tuple[dict, dict]:
    """Partition config keys between TrainConfig and ModelConfig."""
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    model_fields = {f.name for f in dataclasses.fields(ModelConfig)}
    train_values, model_values = {}, {}
    for key, value in values.items():
        known = False
        if key in train_fields:
            train_values[key] = value
            known = True
        if key in model_fields:
            model_values[key] = value
            known = True
        if not known:
            raise ConfigError(f"unknown configuration key {key!r}")
    return train_values, model_values


def _parse_set_flags(pairs: list[str]) -> dict[str, str]:
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        values[key.strip()] = value.strip()
    return values


def cmd_gen_data(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    spec = GenSpec()
    if args.spec:
        spec = apply_overrides(spec, parse_config_file(args.spec), strict=True)
    records = generate_dataset(spec, args.count, seed)
    write_records(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    if args.svg_dir:
        for record in records:
            write_view_svgs(record, args.svg_dir)
        print(f"wrote {4 * len(records)} SVG files to {args.svg_dir}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    view = ViewLabel.from_key(args.view)
    drawing = drawing_from_svg(Path(args.svg), view)
    payload = {
        "view": view.key,
        "tokens": [{"kind": t.kind.name.lower(), "params": list(t.params)}
                   for t in drawing.content],
    }
    Path(args.out).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    print(f"ingested {len(drawing.content)} tokens from {args.svg} into {args.out}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    try:
        ratios = tuple(float(r) for r in args.ratios.split(","))
    except ValueError:
        _fail(f"--ratios expects three comma-separated numbers, got {args.ratios!r}")
    records = read_records(args.data)
    train, val, test = split_dataset(records, ratios, seed)
    prefix = Path(args.out_prefix) if args.out_prefix else Path(args.data).with_suffix("")
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = Path(f"{prefix}.{name}.jsonl")
        write_records(path, part)
        print(f"{name}: {len(part)} records -> {path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    if args.profile == "paper":
        from .training import paper_model_config, paper_train_config
        model_config = paper_model_config()
        train_config = paper_train_config()
    else:
        model_config = desk_model_config()
        train_config = desk_train_config()
    overrides: dict = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    overrides.update(_parse_set_flags(args.set or []))
    train_values, model_values = _split_known_keys(overrides)
    model_config = apply_overrides(model_config, model_values, strict=True)
    train_config = apply_overrides(train_config, train_values, strict=True)
    seed = resolve_seed(args.seed, default=train_config.seed)
    train_config = dataclasses.replace(train_config, seed=seed)

    records = read_records(args.data)
    val_records = read_records(args.val) if args.val else []
    if args.resume:
        trainer = resume_trainer(args.resume, train_config, args.out)
    else:
        trainer = Trainer(model_config, train_config, args.out)
    final = trainer.train(records, val_records, max_steps=args.max_steps)
    manifest_path = trainer.write_manifest()
    from .figures import save_loss_curves
    figure = save_loss_curves(trainer.manifest, Path(args.out) / "loss_curves.png")
    print(f"trained {trainer.epoch} epochs ({trainer.step} steps)")
    print(f"final checkpoint: {final}")
    print(f"manifest: {manifest_path}")
    print(f"loss curves: {figure}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    records = read_records(args.data)
    report = evaluate_checkpoint(args.ckpt, records, k=args.k, seed=seed)
    text = report_to_text(report)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(text, encoding="utf-8")
    from .figures import save_metrics_chart
    figure = save_metrics_chart(report, report_path.with_suffix(".png"))
    print(text, end="")
    print(f"report: {report_path}")
    print(f"figure: {figure}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    from .checkpoint import load_model
    from .training import run_inference

    model, _ = load_model(args.ckpt)
    config = model.config
    if config.view_mode != args.view_mode:
        _fail(f"checkpoint was trained with view mode {config.view_mode!r}, "
              f"got --view-mode {args.view_mode!r}")
    expected = config.views
    if len(args.svg) != len(expected):
        missing = [v.key for v in expected[len(args.svg):]]
        _fail(f"view mode {args.view_mode!r} needs {len(expected)} SVG files in order "
              f"{[v.key for v in expected]}; missing: {missing or 'extra files supplied'}")
    views = {}
    for view, path in zip(expected, args.svg):
        views[view] = drawing_from_svg(Path(path), view)
    views_to_arrays(views, config)  # validates the stack before running
    dummy_cad = sequence_from_text("", length=config.cad_len)
    record = SampleRecord(id="infer", views=_pad_views(views), cad=dummy_cad)
    (sequence,) = run_inference(model, [record])
    Path(args.out).write_text(sequence_to_text(sequence), encoding="utf-8")
    print(f"wrote CAD sequence to {args.out}")
    return 0


def _pad_views(views: dict) -> dict:
    """Records require all four views; fill the unused ones with empty drawings."""
    from .drawing import pad_drawing

    full = dict(views)
    for view in ViewLabel:
        if view not in full:
            full[view] = pad_drawing([], view)
    return full


def cmd_reconstruct(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    text = Path(args.seq).read_text(encoding="utf-8")
    try:
        seq = sequence_from_text(text)
    except CadError as exc:
        _fail(f"cannot parse {args.seq}: {exc}")
    solid = reconstruct(seq)
    if isinstance(solid, InvalidityReason):
        _fail(f"sequence does not build a valid shape ({solid})")
    points = sample_shape(solid, args.k, seed)
    save_points(args.points_out, points)
    print(f"sampled {len(points)} surface points to {args.points_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svg2cad",
        description="Vector engineering drawings to parametric CAD sequences.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic paired samples")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--spec", help="GenSpec overrides, key = value per line")
    p.add_argument("--out", required=True)
    p.add_argument("--svg-dir", help="also write per-view SVG files here")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("ingest", help="tokenize one SVG drawing")
    p.add_argument("svg")
    p.add_argument("--view", required=True,
                   choices=[v.key for v in ViewLabel])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="shuffle and split a dataset")
    p.add_argument("data")
    p.add_argument("--ratios", default="0.9,0.05,0.05")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key = value file over TrainConfig/ModelConfig fields")
    p.add_argument("--data", required=True)
    p.add_argument("--val", help="validation records")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on records")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--k", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict a CAD sequence from SVG views")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--svg", action="append", required=True,
                   help="one per view, in stacking order (front top right isometric)")
    p.add_argument("--view-mode", required=True, choices=["iso", "ortho", "all"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("reconstruct", help="build and sample a CAD sequence")
    p.add_argument("--seq", required=True)
    p.add_argument("--points-out", required=True)
    p.add_argument("--k", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
