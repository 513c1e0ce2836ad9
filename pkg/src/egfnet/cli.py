"""``egfnet`` command line: train, eval, infer, verify, synth.

Exit codes: 0 success, 1 validation or input error, 2 verification failure.
Output on stdout is deterministic; ``--verbose`` sends timestamped logs to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from typing import Optional, Sequence

from . import checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .data_io import (colorize, load_dataset_spec, load_sample, read_rgb, read_thermal, resize_bilinear,
                      to_gray8, write_png, write_synthetic_dataset)
from .edge_prior import prior_edge_map
from .fusion import EGFNet
from .metrics import format_table, report, report_json
from .rng import Rng
from .supervision import LOSS_NAMES, sigmoid
from .tensor import Tensor
from .training import evaluate, train
from .verification import suites

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2
LOG_COLUMNS = ("step", *LOSS_NAMES, "total")


def build_model(cfg: ExperimentConfig, num_classes: int) -> EGFNet:
    return EGFNet(num_classes, cfg.encoder).initialize(Rng(cfg.seed))


def load_split(cfg: ExperimentConfig, split: str):
    spec = load_dataset_spec(cfg.dataset)
    if split not in spec.splits:
        raise ConfigError(f"dataset has no split {split!r}")
    return spec, [load_sample(spec, sid, tag) for sid, tag in spec.splits[split]]


def load_model(cfg: ExperimentConfig, num_classes: int, path: str) -> EGFNet:
    net = EGFNet(num_classes, cfg.encoder)
    net.load_state_dict(checkpoint.load(path))
    return net


# ------------------------------------------------------------- commands


def cmd_train(cfg: ExperimentConfig, out=None) -> str:
    """Train from the seeded initialization; writes the checkpoint and the CSV loss log."""
    out = out or sys.stdout
    spec, samples = load_split(cfg, "train")
    if not samples:
        raise ConfigError("train split is empty")
    net = build_model(cfg, spec.num_classes)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(cfg.loss_log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)

        def log_row(row):
            writer.writerow([row["step"]] + [repr(float(row[k])) for k in LOG_COLUMNS[1:]])

        history = train(net, samples, cfg.train_settings(), on_step=log_row)
    checkpoint.save(cfg.checkpoint_path, net.state_dict())
    if history:
        print(f"trained {len(history)} steps, final total loss {history[-1]['total']:.6f}", file=out)
    else:
        print("trained 0 steps", file=out)
    print(f"checkpoint: {cfg.checkpoint_path}", file=out)
    print(f"loss log: {cfg.loss_log_path}", file=out)
    return cfg.checkpoint_path


def cmd_eval(cfg: ExperimentConfig, ckpt: str, split: str, out=None) -> dict:
    """Eval-mode metrics over a split, with one sub-report per sample tag."""
    out = out or sys.stdout
    spec, samples = load_split(cfg, split)
    if not samples:
        raise ConfigError(f"split {split!r} is empty")
    net = load_model(cfg, spec.num_classes, ckpt)
    cm, by_tag = evaluate(net, samples, cfg.variant, cfg.batch_size)
    rep = report(cm, spec.class_names)
    rep["split"] = split
    rep["by_tag"] = {tag: report(sub, spec.class_names) for tag, sub in by_tag.items()}
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(cfg.report_path(split), "w", encoding="utf-8") as fh:
        fh.write(report_json(rep))
    print(f"split {split}: {len(samples)} samples", file=out)
    print(format_table(rep), file=out)
    for tag, sub in rep["by_tag"].items():
        print(f"[{tag}] mAcc {_pct(sub['macc'])}  mIoU {_pct(sub['miou'])}", file=out)
    print(f"report: {cfg.report_path(split)}", file=out)
    return rep


def _pct(v) -> str:
    return "-" if v is None else f"{100.0 * v:.2f}"


def _fit_size(size: int) -> int:
    return max(32, int(round(size / 32.0)) * 32)


def cmd_infer(cfg: ExperimentConfig, ckpt: str, rgb_path: str, thermal_path: str, out_dir: str,
              resize: bool = False, out=None) -> list:
    """Write the colorized semantic map, the boundary probability and the prior edge map."""
    out = out or sys.stdout
    spec = load_dataset_spec(cfg.dataset)
    try:
        rgb, thermal = read_rgb(rgb_path), read_thermal(thermal_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"unreadable input: {exc}") from None
    if rgb.shape[2:] != thermal.shape[2:]:
        raise ConfigError(f"rgb {list(rgb.shape[2:])} and thermal {list(thermal.shape[2:])} sizes differ")
    h, w = rgb.shape[2:]
    net = load_model(cfg, spec.num_classes, ckpt).eval()

    edge_full = prior_edge_map(Tensor(rgb), Tensor(thermal))
    if h % 32 or w % 32:
        if not resize:
            raise ConfigError(f"input {h}x{w} is not divisible by 32 (pass --resize)")
        size = (_fit_size(h), _fit_size(w))
        rgb_in = Tensor(resize_bilinear(rgb[0], size)[None])
        th_in = Tensor(resize_bilinear(thermal[0], size)[None])
    else:
        rgb_in, th_in = Tensor(rgb), Tensor(thermal)
    preds = net(rgb_in, th_in, prior_edge_map(rgb_in, th_in), cfg.variant)
    logits, boundary = preds.S2.data[0], sigmoid(preds.B[2])[0]
    if logits.shape[1:] != (h, w):
        logits = resize_bilinear(logits, (h, w))
        boundary = resize_bilinear(boundary, (h, w))

    stem = os.path.splitext(os.path.basename(rgb_path))[0]
    paths = [os.path.join(out_dir, f"{stem}_{kind}.png") for kind in ("semantic", "boundary", "edge")]
    write_png(paths[0], colorize(logits.argmax(axis=0), spec.palette))
    write_png(paths[1], to_gray8(boundary[0]))
    write_png(paths[2], to_gray8(edge_full.data[0, 0]))
    for p in paths:
        print(f"wrote {p}", file=out)
    return paths


def cmd_verify(names: Optional[Sequence[str]] = None, out=None) -> bool:
    out = out or sys.stdout
    ok = True
    for res in suites.run_all(names):
        for line in res.lines:
            print(f"  {line}", file=out)
        print(f"suite {res.name}: {'PASS' if res.passed else 'FAIL'}", file=out)
        ok &= res.passed
    print(f"verify: {'PASS' if ok else 'FAIL'}", file=out)
    return ok


def cmd_synth(out_dir: str, samples: int, seed: int, size=(64, 64), out=None) -> None:
    out = out or sys.stdout
    spec = write_synthetic_dataset(out_dir, samples, seed, tuple(size))
    counts = ", ".join(f"{k} {len(v)}" for k, v in spec.splits.items())
    print(f"synthetic dataset at {out_dir}: {counts}", file=out)


# ---------------------------------------------------------------- entry


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egfnet", description="Edge-guided RGB-thermal scene parsing.")
    ap.add_argument("-v", "--verbose", action="store_true", help="timestamped progress log on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("infer", help="predict one RGB/thermal pair")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--thermal", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resize", action="store_true", help="resample inputs to a multiple of 32 first")

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--suite", action="append", choices=sorted(suites.SUITES))

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("H", "W"))
    return ap


def _thread_limit():
    raw = os.environ.get("EGF_THREADS")
    if not raw:
        return contextlib.nullcontext()
    if not raw.isdigit() or int(raw) < 1:
        raise ConfigError(f"EGF_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(raw))


def _dispatch(args) -> int:
    if args.command == "verify":
        return EXIT_OK if cmd_verify(args.suite) else EXIT_VERIFY
    if args.command == "synth":
        cmd_synth(args.out, args.samples, args.seed, args.size)
        return EXIT_OK
    cfg = load_config(args.config)
    if args.command == "train":
        cmd_train(cfg)
    elif args.command == "eval":
        cmd_eval(cfg, args.checkpoint, args.split)
    else:
        cmd_infer(cfg, args.checkpoint, args.rgb, args.thermal, args.out, args.resize)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        with _thread_limit():
            return _dispatch(args)
    except (ConfigError, KeyError, ValueError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"egfnet {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
