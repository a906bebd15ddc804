"""Experiment configuration: a sectioned key=value file, fully validated.

Schema (all sections and keys optional unless a command needs them;
unknown sections or keys are rejected):

    [dataset]
    path = shapes.gfss      ; read an existing dataset file
    image_size = 64         ; or synthesize with these keys
    class_count = 20
    images_per_class = 25
    shapes_min = 2
    shapes_max = 4
    noise_std = 0.02
    seed = 7

    [split]
    index = 0               ; which novel block of 5 classes
    class_count = 20
    novel_per_split = 5
    seed = 3                ; train/val partition shuffle

    [model]
    encoder = tiny_vit_a
    decoder = linear
    image_size = 64

    [base_train]
    epochs = 100
    batch_size = 8
    lr = 2.5e-4
    momentum = 0.9
    weight_decay = 1e-4
    seed = 11
    model_seed = 42
    pretrain_epochs = 0     ; > 0 pretrains the backbone first
    pretrain_lr = 2e-2
    pretrain_seed = 5

    [adapt]
    iterations = 300
    lr = 1.25e-3
    shots = 1

    [eval]
    run_count = 5
    seed = 99
    max_queries = 0         ; 0 = every suitable query
    workers = 1

    [output]
    dir = out
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .models import ModelConfig
from .numcore import SgdConfig
from .protocol import AdaptConfig, BaseTrainConfig
from .splits import ClassSplit, standard_split


class ConfigError(ValueError):
    """A configuration file failed validation."""


_SCHEMA = {
    "dataset": {"path", "image_size", "class_count", "images_per_class",
                "shapes_min", "shapes_max", "noise_std", "seed"},
    "split": {"index", "class_count", "novel_per_split", "seed"},
    "model": {"encoder", "decoder", "image_size"},
    "base_train": {"epochs", "batch_size", "lr", "momentum", "weight_decay",
                   "seed", "model_seed", "pretrain_epochs", "pretrain_lr",
                   "pretrain_seed"},
    "adapt": {"iterations", "lr", "shots"},
    "eval": {"run_count", "seed", "max_queries", "workers"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a command needs, resolved and validated."""

    dataset_path: Path | None
    synth: "SynthConfig"
    split: ClassSplit
    split_seed: int
    model: ModelConfig
    base_train: BaseTrainConfig
    base_seed: int
    model_seed: int
    pretrain_epochs: int
    pretrain_lr: float
    pretrain_seed: int
    adapt: AdaptConfig
    run_count: int
    eval_seed: int
    max_queries: int
    workers: int
    out_dir: Path = field(default_factory=lambda: Path("out"))

    def __post_init__(self):
        if self.run_count < 1:
            raise ConfigError("eval run_count must be >= 1")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be >= 0")
        if self.pretrain_lr < 0:
            raise ConfigError("pretrain_lr must be >= 0")
        if self.max_queries < 0:
            raise ConfigError("max_queries must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.dataset_path is not None and not self.dataset_path.exists():
            raise ConfigError(f"dataset path does not exist: {self.dataset_path}")


def _get(parser, section, key, cast, default, errors: list[str]):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        return cast(raw)
    except ValueError:
        errors.append(f"[{section}] {key}: cannot parse {raw!r} as {cast.__name__}")
        return default


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a config file.

    ``overrides`` maps dotted ``section.key`` names to replacement raw
    string values (how command-line flags reach the config layer).
    Raises ConfigError with every problem found, not just the first.
    """
    from .data import SynthConfig  # local import to avoid a cycle

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))

    errors: list[str] = []
    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key {key!r} in [{section}]")

    g = lambda sec, key, cast, default: _get(parser, sec, key, cast, default, errors)

    shots = g("adapt", "shots", int, 1)
    if shots not in (1, 5):
        errors.append(f"[adapt] shots must be 1 or 5, got {shots}")

    dataset_path = g("dataset", "path", str, None)
    try:
        synth = SynthConfig(
            image_size=g("dataset", "image_size", int, 64),
            class_count=g("dataset", "class_count", int, 20),
            images_per_class=g("dataset", "images_per_class", int, 25),
            shapes_per_image=(g("dataset", "shapes_min", int, 2),
                              g("dataset", "shapes_max", int, 4)),
            noise_std=g("dataset", "noise_std", float, 0.02),
            seed=g("dataset", "seed", int, 7),
        )
    except ValueError as exc:
        errors.append(f"[dataset] {exc}")
        synth = SynthConfig()

    try:
        split = standard_split(
            g("split", "index", int, 0),
            class_count=g("split", "class_count", int, 20),
            novel_per_split=g("split", "novel_per_split", int, 5),
        )
    except ValueError as exc:
        errors.append(f"[split] {exc}")
        split = standard_split(0)

    try:
        model = ModelConfig(
            encoder=g("model", "encoder", str, "tiny_vit_a"),
            decoder=g("model", "decoder", str, "linear"),
            image_size=g("model", "image_size", int, 64),
        )
    except ValueError as exc:
        errors.append(f"[model] {exc}")
        model = ModelConfig("tiny_vit_a", "linear")

    try:
        base_train = BaseTrainConfig(
            epochs=g("base_train", "epochs", int, 100),
            batch_size=g("base_train", "batch_size", int, 8),
            sgd=SgdConfig(
                learning_rate=g("base_train", "lr", float, 2.5e-4),
                momentum=g("base_train", "momentum", float, 0.9),
                weight_decay=g("base_train", "weight_decay", float, 1e-4),
            ),
        )
    except ValueError as exc:
        errors.append(f"[base_train] {exc}")
        base_train = BaseTrainConfig()

    try:
        adapt = AdaptConfig(
            iterations=g("adapt", "iterations", int, 300),
            learning_rate=g("adapt", "lr", float, 1.25e-3),
            shots=shots if shots in (1, 5) else 1,
        )
    except ValueError as exc:
        errors.append(f"[adapt] {exc}")
        adapt = AdaptConfig()

    if dataset_path is None and model.image_size != synth.image_size:
        errors.append(
            f"model image_size {model.image_size} does not match dataset "
            f"image_size {synth.image_size}")

    if errors:
        raise ConfigError("; ".join(errors))

    try:
        return ExperimentConfig(
            dataset_path=Path(dataset_path) if dataset_path else None,
            synth=synth,
            split=split,
            split_seed=g("split", "seed", int, 3),
            model=model,
            base_train=base_train,
            base_seed=g("base_train", "seed", int, 11),
            model_seed=g("base_train", "model_seed", int, 42),
            pretrain_epochs=g("base_train", "pretrain_epochs", int, 0),
            pretrain_lr=g("base_train", "pretrain_lr", float, 2e-2),
            pretrain_seed=g("base_train", "pretrain_seed", int, 5),
            adapt=adapt,
            run_count=g("eval", "run_count", int, 5),
            eval_seed=g("eval", "seed", int, 99),
            max_queries=g("eval", "max_queries", int, 0),
            workers=g("eval", "workers", int, 1),
            out_dir=Path(g("output", "dir", str, "out")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
