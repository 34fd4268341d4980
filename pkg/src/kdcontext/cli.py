"""Command-line front end.

Subcommands cover dataset preparation, training, evaluation, prediction
export, tree inspection, history-to-csv conversion, and a parameter
report.  Every run that produces files also writes a ``manifest.txt``
recording the command, inputs, seed, and package version; nothing in
any output depends on wall-clock time, so identical seeds and inputs
reproduce directories byte for byte.

Configuration files are flat UTF-8 text, one ``key = value`` per line,
``#`` comments, dotted keys for grouping (see ``CONFIG_KEYS``).
Command-line flags override file values.  Errors print a single
machine-parsable line ``error:<category>:<message>`` and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (CompatibilityError, ConfigError, DataError, ToolkitError,
                     UsageError)
from .kdtree import build, dump_nodes, level_partition
from .metrics import format_report, report_kv
from .network import (NetworkConfig, config_mismatch, config_to_text, init_params,
                      parameter_count, parameter_shapes)
from .pointcloud import (PointCloud, load_points, normalize_unit_sphere, resample,
                         save_points, split_blocks)
from .synthetic import make_synthetic
from .training import TrainConfig, cloud_label, evaluate, history_lines, predict_labels, train

INDEX_NAME = "index.txt"
HISTORY_NAME = "history.log"
CHECKPOINT_NAME = "model.ckpt"

CONFIG_KEYS = {
    "task": str,
    "seed": int,
    "network.depth": int,
    "network.class_count": int,
    "network.width_scale": float,
    "network.region_sizes": str,
    "network.dropout": float,
    "network.local_cues": bool,
    "network.global_cues": bool,
    "network.dense_connections": bool,
    "network.hierarchical_aggregation": bool,
    "train.epochs": int,
    "train.batch_size": int,
    "train.lr": float,
    "train.lr_decay": float,
    "train.lr_decay_every": int,
    "train.beta1": float,
    "train.beta2": float,
    "train.epsilon": float,
    "train.eval_every": int,
    "train.early_stop": float,
    "augment.rotate": bool,
    "augment.jitter_sigma": float,
    "augment.jitter_clip": float,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config_file(path) -> dict:
    """Read a flat key = value config file into typed values."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            kind = CONFIG_KEYS[key]
            try:
                if kind is bool:
                    if val not in ("true", "false"):
                        raise ValueError("expected true or false")
                    values[key] = val == "true"
                else:
                    values[key] = kind(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid value for {key!r}: {exc}") from None
    return values


def write_manifest(out_dir, command: str, entries: dict) -> None:
    lines = [f"command = {command}", f"version = {__version__}"]
    lines += [f"{k} = {entries[k]}" for k in sorted(entries)]
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# dataset index
# ---------------------------------------------------------------------------

def write_index(out_dir, entries) -> None:
    """entries: list of (relative path, label-or-'seg')."""
    with open(os.path.join(out_dir, INDEX_NAME), "w", encoding="utf-8") as fh:
        for rel, label in entries:
            fh.write(f"{rel} {label}\n")


def load_dataset(data_dir):
    """Read an index file and its clouds.

    Returns (clouds, task_guess): integer index labels mark
    classification samples (the label is applied as a constant per-point
    vector); ``seg`` rows carry their labels inside the file.
    """
    index_path = os.path.join(data_dir, INDEX_NAME)
    if not os.path.exists(index_path):
        raise DataError(f"no {INDEX_NAME} in {data_dir}")
    clouds = []
    kinds = set()
    with open(index_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{index_path}:{lineno}: expected 'path label-or-seg'")
            rel, label = parts
            pc = load_points(os.path.join(data_dir, rel), "binary-v1")
            if label == "seg":
                kinds.add("segment")
            else:
                kinds.add("classify")
                pc = PointCloud(pc.data, labels=np.full(pc.n, int(label), dtype=np.int64))
            clouds.append(pc)
    if not clouds:
        raise DataError(f"{index_path}: empty index")
    if len(kinds) > 1:
        raise DataError(f"{index_path}: mixes classification and segmentation rows")
    return clouds, kinds.pop()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    if args.synthetic and args.input:
        raise UsageError("--synthetic and --input are mutually exclusive")
    if not args.synthetic and not args.input:
        raise UsageError("one of --synthetic or --input is required")
    os.makedirs(args.out, exist_ok=True)
    entries = []

    if args.synthetic:
        clouds = make_synthetic(args.synthetic, args.points, args.count, args.seed)
        for i, pc in enumerate(clouds):
            rel = f"sample_{i:04d}.bin"
            save_points(pc, os.path.join(args.out, rel), "binary-v1")
            label = str(cloud_label(pc)) if args.synthetic == "classify4" else "seg"
            entries.append((rel, label))
    else:
        pc = load_points(args.input, args.format)
        if args.normalize:
            pc = normalize_unit_sphere(pc)
        if args.blocks:
            blocks = split_blocks(pc, args.block_xy, args.points, args.seed,
                                  min_points=args.min_block_points)
            if not blocks:
                raise DataError("block split produced no sufficiently populated blocks")
            for i, block in enumerate(blocks):
                rel = f"block_{i:04d}.bin"
                save_points(block, os.path.join(args.out, rel), "binary-v1")
                entries.append((rel, "seg"))
        else:
            if args.points:
                pc = resample(pc, args.points, args.seed)
            rel = "sample_0000.bin"
            save_points(pc, os.path.join(args.out, rel), "binary-v1")
            entries.append((rel, "seg"))

    write_index(args.out, entries)
    write_manifest(args.out, "prepare", {
        "seed": args.seed, "out": args.out,
        "source": args.synthetic or args.input,
        "samples": len(entries),
    })
    print(f"wrote {len(entries)} samples to {args.out}")
    return 0


def _ablation_flags(value: str) -> dict:
    """Parse --ablation: comma list of enabled components."""
    names = {"local": "local_cues", "global": "global_cues",
             "dense": "dense_connections", "agg": "hierarchical_aggregation"}
    flags = {v: False for v in names.values()}
    value = value.strip()
    if value and value != "none":
        for item in value.split(","):
            item = item.strip()
            if item not in names:
                raise UsageError(f"unknown ablation component {item!r} "
                                 f"(choose from {sorted(names)})")
            flags[names[item]] = True
    return flags


def _infer_depth(clouds) -> int:
    n = clouds[0].n
    if n & (n - 1):
        raise DataError(f"dataset clouds have {n} points, not a power of two")
    for i, pc in enumerate(clouds):
        if pc.n != n:
            raise DataError(f"cloud {i} has {pc.n} points, expected {n}")
    return n.bit_length() - 1


def _build_configs(args, clouds, task_guess):
    file_cfg = parse_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    task = pick(args.task, "task", task_guess)
    seed = pick(args.seed, "seed", 0)
    depth = pick(args.depth, "network.depth", _infer_depth(clouds))
    class_count = pick(getattr(args, "class_count", None), "network.class_count", None)
    if class_count is None:
        labeled = [pc.labels.max() for pc in clouds if pc.labels is not None]
        if not labeled:
            raise DataError("cannot infer class count from unlabeled data; "
                            "set network.class_count")
        class_count = int(max(labeled)) + 1

    overrides = {}
    if args.ablation is not None:
        overrides.update(_ablation_flags(args.ablation))
    else:
        for key, name in (("network.local_cues", "local_cues"),
                          ("network.global_cues", "global_cues"),
                          ("network.dense_connections", "dense_connections"),
                          ("network.hierarchical_aggregation", "hierarchical_aggregation")):
            if key in file_cfg:
                overrides[name] = file_cfg[key]
    if "network.dropout" in file_cfg:
        overrides["dropout"] = file_cfg["network.dropout"]

    region_sizes = None
    if "network.region_sizes" in file_cfg:
        region_sizes = tuple(int(v) for v in file_cfg["network.region_sizes"].split(","))

    net_cfg = NetworkConfig.for_task(
        task, depth=int(depth), class_count=int(class_count),
        in_features=clouds[0].f,
        width_scale=pick(args.width_scale, "network.width_scale", 1.0),
        region_sizes=region_sizes, **overrides)

    train_cfg = TrainConfig(
        epochs=int(pick(args.epochs, "train.epochs", 100)),
        batch_size=int(pick(args.batch, "train.batch_size", 16)),
        learning_rate=float(pick(args.lr, "train.lr", 1e-3)),
        lr_decay=float(file_cfg.get("train.lr_decay", 0.7)),
        lr_decay_every=int(file_cfg.get("train.lr_decay_every", 20)),
        beta1=float(file_cfg.get("train.beta1", 0.9)),
        beta2=float(file_cfg.get("train.beta2", 0.999)),
        epsilon=float(file_cfg.get("train.epsilon", 1e-8)),
        seed=int(seed),
        rotate=bool(file_cfg.get("augment.rotate", False)),
        jitter_sigma=float(file_cfg.get("augment.jitter_sigma", 0.0)),
        jitter_clip=float(file_cfg.get("augment.jitter_clip", 0.05)),
        eval_every=int(file_cfg.get("train.eval_every", 1)),
        early_stop_metric=file_cfg.get("train.early_stop"),
    )
    return net_cfg, train_cfg


def _compat_error(field, ck_cfg, requested_cfg):
    return CompatibilityError(
        f"checkpoint field {field!r} is {getattr(ck_cfg, field)!r}, "
        f"requested {getattr(requested_cfg, field)!r}", field=field)


def cmd_train(args) -> int:
    clouds, task_guess = load_dataset(args.data)
    net_cfg, train_cfg = _build_configs(args, clouds, task_guess)

    epoch_offset = 0
    if args.resume:
        params, ck_cfg = load_checkpoint(args.resume)
        differs = config_mismatch(ck_cfg, net_cfg)
        if differs:
            raise _compat_error(differs, ck_cfg, net_cfg)
        history_path = os.path.join(args.out, HISTORY_NAME)
        if os.path.exists(history_path):
            with open(history_path, "r", encoding="utf-8") as fh:
                epoch_offset = sum(1 for line in fh if line.strip())
    else:
        params = init_params(net_cfg, seed=train_cfg.seed)

    eval_data = None
    if args.eval_data:
        eval_data, _ = load_dataset(args.eval_data)

    best, history = train(net_cfg, params, clouds, train_cfg, eval_data=eval_data,
                          epoch_offset=epoch_offset)

    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, CHECKPOINT_NAME), best, net_cfg)
    mode = "a" if args.resume and epoch_offset else "w"
    with open(os.path.join(args.out, HISTORY_NAME), mode, encoding="utf-8") as fh:
        fh.write(history_lines(history))
    write_manifest(args.out, "train", {
        "seed": train_cfg.seed, "data": args.data, "out": args.out,
        "config": args.config or "-", "task": net_cfg.task,
        "epochs": train_cfg.epochs, "resume": args.resume or "-",
    })
    if history:
        last = history[-1]
        print(f"epoch {last['epoch']}: loss {last['loss']:.6f} "
              f"acc {last['accuracy']:.4f} miou {last['mean_iou']:.4f}")
    print(f"checkpoint written to {os.path.join(args.out, CHECKPOINT_NAME)}")
    return 0


def _load_model(args):
    params, cfg = load_checkpoint(args.checkpoint)
    if getattr(args, "task", None) is not None and args.task != cfg.task:
        raise CompatibilityError(
            f"checkpoint field 'task' is {cfg.task!r}, requested {args.task!r}",
            field="task")
    return params, cfg


def cmd_eval(args) -> int:
    params, cfg = _load_model(args)
    clouds, _ = load_dataset(args.data)
    report = evaluate(cfg, params, clouds)
    text = format_report(report)
    print(text, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "metrics.kv"), "w", encoding="utf-8") as fh:
            fh.write(report_kv(report))
        write_manifest(args.out, "eval", {
            "checkpoint": args.checkpoint, "data": args.data, "out": args.out,
        })
    return 0


def cmd_predict(args) -> int:
    if bool(args.data) == bool(args.input):
        raise UsageError("exactly one of --data or --input is required")
    params, cfg = _load_model(args)
    os.makedirs(args.out, exist_ok=True)

    if args.data:
        clouds, _ = load_dataset(args.data)
        names = [f"sample_{i:04d}" for i in range(len(clouds))]
    else:
        clouds = [load_points(args.input, args.format)]
        names = [os.path.splitext(os.path.basename(args.input))[0]]

    written = []
    for pc, name in zip(clouds, names):
        if cfg.task == "segment":
            if pc.n != cfg.n_points:
                raise DataError(f"{name}: segmentation needs exactly {cfg.n_points} "
                                f"points, got {pc.n}")
            labels = predict_labels(cfg, params, [pc])[0]
        else:
            model_in = pc if pc.n == cfg.n_points else resample(pc, cfg.n_points, args.seed)
            labels = np.full(pc.n, predict_labels(cfg, params, [model_in])[0])
        out_pc = PointCloud(pc.data[:, :3], labels=np.asarray(labels))
        rel = f"{name}.pred.xyz"
        save_points(out_pc, os.path.join(args.out, rel), "xyz-text")
        written.append(rel)
    write_manifest(args.out, "predict", {
        "checkpoint": args.checkpoint, "out": args.out, "seed": args.seed,
        "source": args.data or args.input, "samples": len(written),
    })
    print(f"wrote {len(written)} prediction files to {args.out}")
    return 0


def cmd_inspect_tree(args) -> int:
    pc = load_points(args.input, args.format)
    if args.points:
        pc = resample(pc, args.points, args.seed)
    tree = build(pc)
    node_text = dump_nodes(tree)

    if args.region_sizes:
        sizes = [int(s) for s in args.region_sizes.split(",")]
    else:
        sizes = [s for s in (32, 64, 128) if s <= pc.n] or [pc.n]
    parts = [level_partition(tree, s) for s in sizes]
    region_lines = ["#cols index " + " ".join(f"region{s}" for s in sizes)]
    for i in range(pc.n):
        region_lines.append(
            "%d %s" % (i, " ".join(str(int(p.membership[i])) for p in parts)))
    region_text = "\n".join(region_lines) + "\n"

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "tree.txt"), "w", encoding="utf-8") as fh:
            fh.write(node_text)
        with open(os.path.join(args.out, "regions.txt"), "w", encoding="utf-8") as fh:
            fh.write(region_text)
        write_manifest(args.out, "inspect-tree", {
            "input": args.input, "out": args.out, "seed": args.seed,
            "region_sizes": ",".join(str(s) for s in sizes),
        })
        print(f"wrote tree dump to {args.out}")
    else:
        print(node_text, end="")
    return 0


def cmd_plotdata(args) -> int:
    rows = []
    with open(args.history, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{args.history}:{lineno}: expected 5 tab-separated fields")
            rows.append(parts)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,acc,miou,lr\n")
        for parts in rows:
            fh.write(",".join(parts) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_params(args) -> int:
    cfg = NetworkConfig.for_task(args.task, depth=args.depth, class_count=args.class_count,
                                 in_features=args.in_features, width_scale=args.width_scale)
    count = parameter_count(cfg)
    cfg_blob = config_to_text(cfg).encode("utf-8")
    size = 4 + 1 + 4 + len(cfg_blob) + 4
    for key, shape in parameter_shapes(cfg).items():
        size += 4 + len(key.encode("utf-8")) + 1 + 4 * len(shape) + 4 * int(np.prod(shape))
    print(f"task: {cfg.task}  depth: {cfg.depth}  classes: {cfg.class_count}  "
          f"input features: {cfg.in_features}  width scale: {args.width_scale}")
    print(f"parameters: {count}")
    print(f"serialized checkpoint size: {size} bytes ({size / 2 ** 20:.1f} MiB)")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdcontext",
                     description="k-d tree guided point-cloud learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--synthetic", choices=["classify4", "segment2"])
    p.add_argument("--count", "--n", type=int, default=64, help="synthetic sample count")
    p.add_argument("--input", help="source point file instead of synthetic data")
    p.add_argument("--format", default="xyz-text", choices=["xyz-text", "binary-v1"])
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--blocks", action="store_true", help="split the input into xy blocks")
    p.add_argument("--block-xy", type=float, default=1.0)
    p.add_argument("--min-block-points", type=int, default=16)
    p.add_argument("--points", type=int, default=256, help="points per output sample")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eval-data")
    p.add_argument("--config")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--task", choices=["classify", "segment"])
    p.add_argument("--depth", type=int)
    p.add_argument("--class-count", type=int)
    p.add_argument("--width-scale", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", help="comma list of enabled components from "
                                      "local,global,dense,agg (or 'none')")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--task", choices=["classify", "segment"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export per-point label predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--input")
    p.add_argument("--format", default="xyz-text", choices=["xyz-text", "binary-v1"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", choices=["classify", "segment"])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect-tree", help="dump k-d tree nodes and region ids")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="xyz-text", choices=["xyz-text", "binary-v1"])
    p.add_argument("--points", type=int, help="resample before building the tree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--region-sizes", help="comma list, e.g. 32,64,128")
    p.add_argument("--out")
    p.set_defaults(func=cmd_inspect_tree)

    p = sub.add_parser("plotdata", help="convert a history log to csv")
    p.add_argument("--history", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("params", help="report parameter count and checkpoint size")
    p.add_argument("--task", default="classify", choices=["classify", "segment"])
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--class-count", type=int, default=40)
    p.add_argument("--in-features", type=int, default=3)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_params)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ToolkitError as exc:
        print(f"error:{exc.category}:{exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io:{exc}", file=sys.stderr)
        return 1


def main_inspect_tree(argv=None) -> int:
    """Entry point for the ``kdtree-inspect`` alias."""
    argv = sys.argv[1:] if argv is None else list(argv)
    return main(["inspect-tree"] + argv)


if __name__ == "__main__":
    sys.exit(main())
