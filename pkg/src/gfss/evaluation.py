"""Episodic evaluation: sample support/query episodes from a pool of
fully labeled images, run the adaptation protocol per episode, and
report base/novel/mean mIoU averaged over independent runs.

Scoring happens in raw class-id space. Background is excluded from both
the base and the novel mIoU (it has no column of its own in reports);
the mean is the arithmetic mean of the base and novel scores.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import ConfusionMatrix, miou, per_class_iou
from .models import ModelConfig, build_model
from .numcore import Rng
from .protocol import AdaptConfig, encode_single, episode_protocol
from .splits import IGNORE_ID, ClassSplit

log = logging.getLogger(__name__)


@dataclass
class Episode:
    """One query with its dedicated support set.

    ``supports`` holds |novel| x shots (image, novel-only mask) pairs.
    ``query_index``/``support_indices`` are pool positions kept around
    so evaluators can cache per-image encoder output."""

    query_image: np.ndarray
    query_mask: np.ndarray
    supports: list[tuple[np.ndarray, np.ndarray]]
    seed: int
    query_index: int = -1
    support_indices: tuple[int, ...] = ()


def _novel_only(mask: np.ndarray, split: ClassSplit) -> np.ndarray:
    """Erase everything except novel-class pixels (they keep their ids)."""
    out = np.zeros_like(mask)
    for cid in split.novel_ids:
        out[mask == cid] = cid
    return out


def sample_episodes(dataset, split: ClassSplit, shots: int, run_seed: int,
                    max_queries: int | None = None) -> list[Episode]:
    """Build one episode per suitable query image.

    A query is suitable when its ground truth contains at least one
    novel-class pixel. Supports are drawn uniformly per novel class
    (``shots`` distinct images each, never the query itself) from the
    images containing that class; their masks keep only novel ids.
    ``max_queries`` caps the episode count by uniform subsampling.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    samples = list(dataset)
    contains: dict[int, list[int]] = {cid: [] for cid in split.novel_ids}
    suitable: list[int] = []
    for idx, sample in enumerate(samples):
        present = set(np.unique(sample.mask).tolist())
        hit = False
        for cid in split.novel_ids:
            if cid in present:
                contains[cid].append(idx)
                hit = True
        if hit:
            suitable.append(idx)

    rng = Rng(run_seed)
    if max_queries is not None and max_queries < len(suitable):
        suitable = sorted(rng.spawn("query-cap").sample(suitable, max_queries))

    episodes: list[Episode] = []
    for qi in suitable:
        support_indices: list[int] = []
        for cid in split.novel_ids:
            candidates = [i for i in contains[cid] if i != qi]
            if len(candidates) < shots:
                raise ValueError(
                    f"novel class {cid} has only {len(candidates)} usable support "
                    f"images, need {shots}")
            picked = rng.spawn("episode", qi, "class", cid).sample(candidates, shots)
            support_indices.extend(picked)
        supports = [
            (samples[i].image, _novel_only(samples[i].mask, split))
            for i in support_indices
        ]
        episodes.append(Episode(
            query_image=samples[qi].image,
            query_mask=samples[qi].mask,
            supports=supports,
            seed=rng.spawn("episode", qi, "init").u64(),
            query_index=qi,
            support_indices=tuple(support_indices),
        ))
    return episodes


def accumulate(conf: ConfusionMatrix, predicted: np.ndarray, truth: np.ndarray,
               ignore_id: int = IGNORE_ID) -> None:
    """Count (truth, predicted) pairs for every non-ignored pixel."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError(
            f"prediction {predicted.shape} and truth {truth.shape} differ")
    conf.update(truth, predicted, ignore_id=ignore_id)


@dataclass(frozen=True)
class RunResult:
    base_miou: float
    novel_miou: float
    per_class_iou: dict[int, float]

    @property
    def mean(self) -> float:
        return (self.base_miou + self.novel_miou) / 2.0


@dataclass(frozen=True)
class MetricsReport:
    per_class_iou: dict[int, float]
    base_miou: float
    novel_miou: float
    mean: float
    run_count: int
    runs: tuple[RunResult, ...]


def aggregate_runs(runs) -> MetricsReport:
    """Average base and novel mIoU across runs; mean = (base+novel)/2.

    Per-class scores are averaged over the runs where the class was
    measurable."""
    runs = tuple(runs)
    if not runs:
        raise ValueError("no runs to aggregate")
    base = float(np.mean([r.base_miou for r in runs]))
    novel = float(np.mean([r.novel_miou for r in runs]))
    class_ids = sorted({cid for r in runs for cid in r.per_class_iou})
    per_class: dict[int, float] = {}
    for cid in class_ids:
        vals = [r.per_class_iou[cid] for r in runs
                if cid in r.per_class_iou and not np.isnan(r.per_class_iou[cid])]
        per_class[cid] = float(np.mean(vals)) if vals else float("nan")
    return MetricsReport(
        per_class_iou=per_class,
        base_miou=base,
        novel_miou=novel,
        mean=(base + novel) / 2.0,
        run_count=len(runs),
        runs=runs,
    )


class FeatureCache:
    """Thread-safe per-image encoder output, computed lazily.

    Valid because the encoder is frozen at adaptation time: features
    depend only on the checkpoint and the image."""

    def __init__(self, model):
        self._model = model
        self._lock = threading.Lock()
        self._store: dict[int, object] = {}

    def get(self, index: int, image: np.ndarray):
        with self._lock:
            if index in self._store:
                return self._store[index]
        feats = encode_single(self._model, image)
        with self._lock:
            self._store.setdefault(index, feats)
            return self._store[index]


def evaluate(checkpoint: dict[str, np.ndarray], pool, split: ClassSplit,
             model_config: ModelConfig, adapt_config: AdaptConfig,
             run_count: int = 5, seed: int = 0, workers: int = 1,
             max_queries: int | None = None, on_prediction=None) -> MetricsReport:
    """Full episodic evaluation over ``run_count`` independent runs.

    Each run reseeds the support sampling. Episodes are independent and
    may be fanned out over ``workers`` threads; per-episode confusion
    matrices are merged by addition, so results do not depend on
    scheduling. ``on_prediction(run, episode, predicted_ids)`` is called
    for every finished episode when given.
    """
    if run_count < 1:
        raise ValueError("run_count must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    pool = list(pool)
    scored_ids = (0,) + split.base_ids + split.novel_ids

    ref = build_model(model_config, split.base_channel_count, seed=0)
    ref.load_state(checkpoint)
    cache = FeatureCache(ref)

    def run_episode(run: int, episode: Episode) -> ConfusionMatrix:
        support_feats = [cache.get(i, img)
                         for i, (img, _) in zip(episode.support_indices,
                                                episode.supports)]
        query_feats = cache.get(episode.query_index, episode.query_image)
        _, channels = episode_protocol(
            checkpoint, episode, split, model_config, adapt_config,
            support_features=support_feats, query_features=query_feats)
        predicted = split.channels_to_ids(channels)
        conf = ConfusionMatrix(scored_ids)
        accumulate(conf, predicted, episode.query_mask)
        if on_prediction is not None:
            on_prediction(run, episode, predicted)
        return conf

    results: list[RunResult] = []
    run_seeds = [Rng(seed).spawn("run", r).u64() for r in range(run_count)]
    for run, run_seed in enumerate(run_seeds):
        episodes = sample_episodes(pool, split, adapt_config.shots, run_seed,
                                   max_queries=max_queries)
        if not episodes:
            raise ValueError("no suitable query images in the pool")
        merged = ConfusionMatrix(scored_ids)
        if workers == 1:
            for ep in episodes:
                merged.merge(run_episode(run, ep))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool_exec:
                for conf in pool_exec.map(lambda ep: run_episode(run, ep), episodes):
                    merged.merge(conf)
        result = RunResult(
            base_miou=miou(merged, split.base_ids),
            novel_miou=miou(merged, split.novel_ids),
            per_class_iou=per_class_iou(merged),
        )
        log.info("run %d: %d episodes, base %.4f novel %.4f mean %.4f",
                 run, len(episodes), result.base_miou, result.novel_miou,
                 result.mean)
        results.append(result)
    return aggregate_runs(results)
