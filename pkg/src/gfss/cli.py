"""Command-line front end.

Subcommands: ``gen-data``, ``base-train``, ``adapt-eval``, ``report``.
Every command takes ``--config`` (see ``gfss.config`` for the schema),
validates it completely before touching the filesystem, and writes its
outputs atomically. Exit codes: 0 success, 1 runtime failure, 2 for
configuration or usage problems (including unreadable input files).
``GFSS_LOG`` selects the log level (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

log = logging.getLogger("gfss.cli")

RESULT_COLUMNS = ("encoder", "decoder", "base_training", "shots",
                  "base", "novel", "mean")


def _write_atomic(path: Path, data) -> None:
    """Write bytes or text so the target never holds a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_samples(cfg):
    from .data import DatasetError, generate, load_dataset

    if cfg.dataset_path is not None:
        samples = load_dataset(cfg.dataset_path)
    else:
        samples = generate(cfg.synth)
    size = cfg.model.image_size
    allowed = np.zeros(256, dtype=bool)
    allowed[list(cfg.split.channel_order())] = True
    allowed[255] = True
    for i, s in enumerate(samples):
        if s.image.shape[1:] != (size, size):
            raise ConfigProblem(
                f"sample {i} is {s.image.shape[1]}x{s.image.shape[2]}, "
                f"model expects {size}x{size}")
        stray = np.unique(s.mask[~allowed[s.mask]])
        if stray.size:
            raise ConfigProblem(
                f"sample {i} carries ids {stray.tolist()} outside the split")
    return samples


class ConfigProblem(ValueError):
    """Input validation failure surfaced as exit code 2."""


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg, emit_pngs: bool) -> int:
    from .data import generate, save_dataset, save_overlay_png

    samples = generate(cfg.synth)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    target = out / "dataset.gfss"
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".dataset.")
    os.close(fd)
    try:
        save_dataset(tmp, samples)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.info("wrote %d samples to %s", len(samples), target)
    if emit_pngs:
        png_dir = out / "png"
        png_dir.mkdir(exist_ok=True)
        for i, s in enumerate(samples):
            save_overlay_png(png_dir / f"sample{i:04d}.png", s.image, s.mask)
        log.info("wrote %d overlay PNGs to %s", len(samples), png_dir)
    print(f"dataset: {target} ({len(samples)} samples, "
          f"{cfg.synth.class_count} classes)")
    return 0


def cmd_base_train(cfg) -> int:
    from .data import pretrain_split, split_dataset
    from .models import build_model
    from .numcore import SgdConfig, save_checkpoint
    from .protocol import BaseTrainConfig, base_train, pretrain_backbone

    samples = _load_samples(cfg)
    train, val, _ = split_dataset(samples, cfg.split, seed=cfg.split_seed)
    model = build_model(cfg.model, cfg.split.base_channel_count, cfg.model_seed)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if cfg.pretrain_epochs > 0:
        pre_train, pre_val = pretrain_split(samples, seed=cfg.split_seed)
        scratch = build_model(cfg.model, cfg.split.channel_count, cfg.model_seed)
        pre_cfg = BaseTrainConfig(
            epochs=cfg.pretrain_epochs, batch_size=cfg.base_train.batch_size,
            sgd=SgdConfig(cfg.pretrain_lr, momentum=0.9, weight_decay=1e-4))
        enc_state, _ = pretrain_backbone(scratch, pre_train, pre_val, cfg.split,
                                         pre_cfg, seed=cfg.pretrain_seed)
        model.load_encoder_state(enc_state)
        fd, tmp = tempfile.mkstemp(dir=out, prefix=".encoder.")
        os.close(fd)
        save_checkpoint(tmp, enc_state)
        os.replace(tmp, out / "encoder.ckpt")
        log.info("pretrained backbone saved to %s", out / "encoder.ckpt")

    best_state, history = base_train(model, train, val, cfg.split,
                                     cfg.base_train, seed=cfg.base_seed)

    fd, tmp = tempfile.mkstemp(dir=out, prefix=".checkpoint.")
    os.close(fd)
    save_checkpoint(tmp, best_state)
    os.replace(tmp, out / "checkpoint.ckpt")
    rows = [(epoch, f"{loss:.6f}", f"{miou:.6f}")
            for epoch, (loss, miou) in enumerate(history)]
    _write_atomic(out / "history.csv", _csv_text(("epoch", "loss", "val_miou"), rows))

    scores = [miou for _, miou in history]
    best_epoch = int(np.argmax(scores))
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    print(f"best epoch {best_epoch} val_miou {scores[best_epoch]:.4f}")
    return 0


def cmd_adapt_eval(cfg, checkpoint_path: Path | None, emit_pngs: bool) -> int:
    from .data import save_overlay_png, split_dataset
    from .evaluation import evaluate
    from .models import build_model
    from .numcore import load_checkpoint
    from .protocol import validation_miou

    ckpt_path = checkpoint_path or (cfg.out_dir / "checkpoint.ckpt")
    if not ckpt_path.exists():
        raise ConfigProblem(f"checkpoint not found: {ckpt_path}")
    state = load_checkpoint(ckpt_path)

    samples = _load_samples(cfg)
    _, val, pool = split_dataset(samples, cfg.split, seed=cfg.split_seed)
    model = build_model(cfg.model, cfg.split.base_channel_count, seed=0)
    model.load_state(state)
    base_training = validation_miou(model, val, cfg.split)

    overlays: list[tuple[int, np.ndarray, np.ndarray]] = []

    def on_prediction(run, episode, predicted):
        if run == 0:
            overlays.append((episode.query_index, episode.query_image, predicted))

    report = evaluate(state, pool, cfg.split, cfg.model, cfg.adapt,
                      run_count=cfg.run_count, seed=cfg.eval_seed,
                      workers=cfg.workers,
                      max_queries=cfg.max_queries or None,
                      on_prediction=on_prediction if emit_pngs else None)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    row = (cfg.model.encoder, cfg.model.decoder, f"{base_training:.6f}",
           cfg.adapt.shots, f"{report.base_miou:.6f}",
           f"{report.novel_miou:.6f}", f"{report.mean:.6f}")
    _write_atomic(out / "results.csv", _csv_text(RESULT_COLUMNS, [row]))

    kind = {cid: "base" for cid in cfg.split.base_ids}
    kind.update({cid: "novel" for cid in cfg.split.novel_ids})
    kind[cfg.split.background_id] = "background"
    per_class = [(cid, kind[cid], f"{iou:.6f}")
                 for cid, iou in sorted(report.per_class_iou.items())]
    _write_atomic(out / "per_class.csv",
                  _csv_text(("class_id", "kind", "iou"), per_class))

    if emit_pngs:
        png_dir = out / "png"
        png_dir.mkdir(exist_ok=True)
        for qi, image, predicted in sorted(overlays, key=lambda t: t[0]):
            ids = cfg.split.channels_to_ids(predicted)
            save_overlay_png(png_dir / f"query{qi:04d}.png", image, ids)
        log.info("wrote %d prediction overlays to %s", len(overlays), png_dir)

    print(f"results: {out / 'results.csv'}")
    print(f"base {report.base_miou:.4f} novel {report.novel_miou:.4f} "
          f"mean {report.mean:.4f} over {report.run_count} runs")
    return 0


def cmd_report(paths: list[str], out_dir: Path) -> int:
    if not paths:
        raise ConfigProblem("report needs at least one results CSV")
    rows = []
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise ConfigProblem(f"no such file: {path}")
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or \
                    tuple(reader.fieldnames) != RESULT_COLUMNS:
                raise ConfigProblem(
                    f"{path}: expected columns {','.join(RESULT_COLUMNS)}, "
                    f"got {reader.fieldnames}")
            found = False
            for record in reader:
                rows.append([record[c] for c in RESULT_COLUMNS])
                found = True
            if not found:
                raise ConfigProblem(f"{path}: no data rows")

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_dir / "merged.csv", _csv_text(RESULT_COLUMNS, rows))

    widths = [max(len(str(v)) for v in [col] + [r[i] for r in rows])
              for i, col in enumerate(RESULT_COLUMNS)]
    header = "  ".join(c.ljust(w) for c, w in zip(RESULT_COLUMNS, widths))
    print(header)
    print("-" * len(header))
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfss",
        description="Few-shot segmentation pipeline: synthesize data, run "
                    "base training, adapt and score on episodes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int,
                       help="override the command's primary seed")

    p = sub.add_parser("gen-data", help="synthesize a dataset file")
    common(p)
    p.add_argument("--emit-pngs", action="store_true",
                   help="also write per-sample overlay PNGs")

    p = sub.add_parser("base-train", help="train on background + base classes")
    common(p)

    p = sub.add_parser("adapt-eval", help="episodic adaptation and scoring")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint path "
                   "(default: <out dir>/checkpoint.ckpt)")
    p.add_argument("--shots", type=int, choices=(1, 5),
                   help="supports per novel class (overrides [adapt] shots)")
    p.add_argument("--workers", type=int,
                   help="episode worker threads (overrides [eval] workers)")
    p.add_argument("--emit-pngs", action="store_true",
                   help="write run-0 prediction overlays")

    p = sub.add_parser("report", help="merge results CSVs into one table")
    p.add_argument("csvs", nargs="*", help="results.csv paths")
    p.add_argument("--out", help="output directory (default out)")
    return parser


_SEED_KEY = {"gen-data": "dataset.seed", "base-train": "base_train.seed",
             "adapt-eval": "eval.seed"}


def main(argv=None) -> int:
    level = os.environ.get("GFSS_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")

    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2

    from .config import ConfigError, load_config
    from .data import DatasetError
    from .numcore import CheckpointError

    try:
        if args.command == "report":
            return cmd_report(args.csvs, Path(args.out or "out"))

        overrides = {}
        if args.seed is not None:
            overrides[_SEED_KEY[args.command]] = args.seed
        if args.out is not None:
            overrides["output.dir"] = args.out
        if args.command == "adapt-eval":
            if args.shots is not None:
                overrides["adapt.shots"] = args.shots
            if args.workers is not None:
                overrides["eval.workers"] = args.workers
        cfg = load_config(args.config, overrides)

        if args.command == "gen-data":
            return cmd_gen_data(cfg, args.emit_pngs)
        if args.command == "base-train":
            return cmd_base_train(cfg)
        return cmd_adapt_eval(
            cfg, Path(args.checkpoint) if args.checkpoint else None,
            args.emit_pngs)
    except (ConfigError, ConfigProblem, DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
