"""The two-stage segmentation protocol.

Stage one trains a model on background + base classes with plain
cross-entropy and keeps the checkpoint with the best validation mIoU.
Stage two runs per episode: reload that checkpoint, append novel-class
parameters to the decoder, fit only the adaptation surface on a handful
of support images, then predict the query with every class competing.

The support loss is computed on *aligned* predictions
(``adjust_prediction``): base-class probability mass is folded into the
background channel so that unlabeled base objects in support masks do
not punish the frozen base knowledge. Query predictions are never
aligned; at query time all channels compete.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import ConfusionMatrix, miou
from .models import MaskTransformerLite, SegModel, UperNetLite, build_decoder, build_encoder, build_model
from .numcore import Rng, SGD, SgdConfig, Tensor, cross_entropy, no_grad, softmax
from .numcore.tensor import concat, slice_axis, tensor_sum
from .splits import IGNORE_ID, ClassSplit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptConfig:
    """Support-set adaptation settings. 1 and 5 are the standard shot counts."""

    iterations: int = 300
    learning_rate: float = 1.25e-3
    shots: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.shots < 1:
            raise ValueError("shots must be at least 1")


@dataclass(frozen=True)
class BaseTrainConfig:
    epochs: int = 100
    batch_size: int = 8
    sgd: SgdConfig = field(
        default_factory=lambda: SgdConfig(learning_rate=2.5e-4, momentum=0.9,
                                          weight_decay=1e-4))

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")


# ---------------------------------------------------------------------------
# prediction alignment


def adjust_prediction(probs, split: ClassSplit):
    """Fold background + base probability mass into the background channel.

    Per pixel, an input distribution ``[p_0 .. p_B, q_1 .. q_n]`` over
    background, B base channels and n novel channels becomes
    ``[sum(p_0..p_B), 0 x B, q_1 .. q_n]``. Channel count and the
    simplex are preserved, and the map is idempotent (the zeros
    contribute nothing to the re-summed background).

    Accepts [K,H,W] or [N,K,H,W]; a Tensor input stays on the autodiff
    graph, a plain array comes back as a plain array.
    """
    is_tensor = isinstance(probs, Tensor)
    t = probs if is_tensor else Tensor(np.asarray(probs, dtype=np.float32))
    if t.ndim == 3:
        axis = 0
    elif t.ndim == 4:
        axis = 1
    else:
        raise ValueError(f"expected [K,H,W] or [N,K,H,W], got shape {t.shape}")
    k = t.shape[axis]
    if k != split.channel_count:
        raise ValueError(
            f"probability map has {k} channels, split expects {split.channel_count}")
    b = split.base_count
    absorbed = tensor_sum(slice_axis(t, axis, 0, 1 + b), axis=axis, keepdims=True)
    zero_shape = list(t.shape)
    zero_shape[axis] = b
    zeros = Tensor(np.zeros(zero_shape, dtype=np.float32))
    novel = slice_axis(t, axis, 1 + b, k)
    out = concat([absorbed, zeros, novel], axis=axis)
    return out if is_tensor else out.data


# ---------------------------------------------------------------------------
# decoder augmentation


def _novel_rows(base_rows: np.ndarray, count: int, rng: Rng) -> np.ndarray:
    """Fresh rows scaled like the existing ones."""
    scale = float(base_rows.std())
    if scale == 0.0:
        scale = 0.02
    return rng.normal((count,) + base_rows.shape[1:], std=scale)


def _rebuild_with_state(decoder, class_count: int, overrides: dict[str, np.ndarray]):
    """Same-architecture decoder with ``class_count`` classes; parameters
    come from the old decoder except for ``overrides``."""
    fresh = build_decoder(decoder.KIND, Rng(0).spawn("rebuild"), decoder.spec,
                          class_count)
    old = {n: p.data for n, p in decoder.named_parameters()}
    for name, p in fresh.named_parameters():
        source = overrides[name] if name in overrides else old[name]
        if tuple(source.shape) != p.shape:
            raise ValueError(f"shape mismatch rebuilding {name}")
        p.data = np.ascontiguousarray(source, dtype=np.float32).copy()
    return fresh


def augment_linear_decoder(decoder, split: ClassSplit, seed: int):
    """Append one prototype row (and bias) per novel class to a
    classifier-head decoder. Existing rows are preserved bit for bit."""
    if not hasattr(decoder, "head"):
        raise ValueError("decoder has no classifier head to augment")
    expect = split.base_channel_count
    head = decoder.head
    if head.class_count != expect:
        raise ValueError(
            f"decoder head has {head.class_count} rows, expected {expect} "
            "(background + base classes)")
    rng = Rng(seed).spawn("novel-prototypes")
    new_rows = _novel_rows(head.weight.data, split.novel_count, rng)
    weight = np.concatenate([head.weight.data, new_rows], axis=0)
    bias = np.concatenate(
        [head.bias.data, np.zeros(split.novel_count, dtype=np.float32)])
    return _rebuild_with_state(decoder, split.channel_count,
                               {"head.weight": weight, "head.bias": bias})


def augment_mask_transformer(decoder: MaskTransformerLite, split: ClassSplit,
                             seed: int):
    """Append one class embedding per novel class. Existing embeddings
    are preserved bit for bit."""
    if not isinstance(decoder, MaskTransformerLite):
        raise ValueError("not a mask-transformer decoder")
    expect = split.base_channel_count
    if decoder.class_count != expect:
        raise ValueError(
            f"decoder has {decoder.class_count} class embeddings, expected {expect}")
    rng = Rng(seed).spawn("novel-embeddings")
    new_rows = _novel_rows(decoder.class_embeddings.data, split.novel_count, rng)
    table = np.concatenate([decoder.class_embeddings.data, new_rows], axis=0)
    return _rebuild_with_state(decoder, split.channel_count,
                               {"class_embeddings": table})


def augment_decoder(model: SegModel, split: ClassSplit, seed: int) -> SegModel:
    """New model ready for adaptation: same encoder weights, decoder
    extended to all channels, trainability narrowed to the decoder's
    adaptation surface (the encoder is always frozen here)."""
    if model.class_count != split.base_channel_count:
        raise ValueError(
            f"model predicts {model.class_count} channels; expected "
            f"{split.base_channel_count} before augmentation")
    if isinstance(model.decoder, MaskTransformerLite):
        new_decoder = augment_mask_transformer(model.decoder, split, seed)
    else:
        new_decoder = augment_linear_decoder(model.decoder, split, seed)
    encoder = build_encoder(model.config.encoder, Rng(0).spawn("enc-rebuild"),
                            model.config.image_size)
    old_enc = {n: p.data for n, p in model.encoder.named_parameters()}
    for name, p in encoder.named_parameters():
        p.data = old_enc[name].copy()
    out = SegModel(model.config, encoder, new_decoder)
    out.set_trainable({f"decoder.{n}" for n in new_decoder.adapt_trainable()})
    return out


# ---------------------------------------------------------------------------
# datasets as arrays


def _stack(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Accepts (images, masks) arrays, or an iterable of samples with
    ``.image``/``.mask`` attributes or (image, mask) pairs."""
    if (isinstance(dataset, tuple) and len(dataset) == 2
            and isinstance(dataset[0], np.ndarray)):
        images, masks = dataset
    else:
        items = list(dataset)
        if not items:
            return (np.zeros((0, 3, 0, 0), np.float32), np.zeros((0, 0, 0), np.uint8))
        if hasattr(items[0], "image"):
            images = np.stack([s.image for s in items])
            masks = np.stack([s.mask for s in items])
        else:
            images = np.stack([im for im, _ in items])
            masks = np.stack([mk for _, mk in items])
    images = np.ascontiguousarray(images, dtype=np.float32)
    masks = np.ascontiguousarray(masks)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"images must be [N,3,H,W], got {images.shape}")
    if masks.shape != (images.shape[0], images.shape[2], images.shape[3]):
        raise ValueError("masks do not match images")
    return images, masks


def _encoder_frozen(model: SegModel) -> bool:
    return not any(n.startswith("encoder.") for n in model.trainable)


def encode_single(model: SegModel, image: np.ndarray):
    """Encode one image (batch of one) without building a graph.

    Per-image encoding keeps results byte-identical whether or not a
    feature cache sits in front of the encoder.
    """
    with no_grad():
        feats = model.encode(image[None])
    if isinstance(feats, list):
        return [f.data for f in feats]
    return feats.data


def _stack_features(per_image: list):
    if isinstance(per_image[0], list):
        levels = len(per_image[0])
        return [Tensor(np.concatenate([f[i] for f in per_image], axis=0))
                for i in range(levels)]
    return Tensor(np.concatenate(per_image, axis=0))


# ---------------------------------------------------------------------------
# stage one: base training


def _channel_miou(model: SegModel, images: np.ndarray, channel_labels: np.ndarray,
                  features=None, chunk: int = 16) -> float:
    """mIoU of argmax predictions in channel space, background included."""
    conf = ConfusionMatrix(range(model.class_count))
    h, w = images.shape[2], images.shape[3]
    with no_grad():
        for start in range(0, images.shape[0], chunk):
            stop = min(start + chunk, images.shape[0])
            if features is not None:
                feats = _stack_features(features[start:stop])
                logits = model.decode(feats, (h, w))
            else:
                logits = model(images[start:stop])
            conf.update(channel_labels[start:stop], np.argmax(logits.data, axis=1))
    return miou(conf)


def validation_miou(model: SegModel, val_set, split: ClassSplit) -> float:
    """Validation-style score of a base-stage model: mIoU over background
    plus all base channels, degenerate classes excluded."""
    images, masks = _stack(val_set)
    if images.shape[0] == 0:
        raise ValueError("empty dataset")
    if model.class_count != split.base_channel_count:
        raise ValueError(
            f"model predicts {model.class_count} channels, expected "
            f"{split.base_channel_count}")
    labels = np.stack(
        [split.mask_to_channels(m, include_novel=False) for m in masks])
    return _channel_miou(model, images, labels)


def base_train(model: SegModel, train_set, val_set, split: ClassSplit,
               cfg: BaseTrainConfig, seed: int = 0, validator=None):
    """Train on background + base classes; return the best checkpoint.

    The returned checkpoint is the parameter snapshot from the epoch
    with the highest validation mIoU (computed over background and all
    base channels), together with the per-epoch (loss, val mIoU)
    history. ViT encoders stay frozen; CNN encoders train fully.

    ``validator`` replaces the mIoU computation when given: called as
    ``validator(model, epoch) -> float`` after each epoch.
    """
    train_images, train_masks = _stack(train_set)
    val_images, val_masks = _stack(val_set)
    if train_images.shape[0] == 0 or val_images.shape[0] == 0:
        raise ValueError("empty dataset")
    if model.class_count != split.base_channel_count:
        raise ValueError(
            f"model predicts {model.class_count} channels, base stage expects "
            f"{split.base_channel_count}")

    if model.config.encoder_is_vit:
        model.set_trainable(
            {n for n, _ in model.named_parameters() if n.startswith("decoder.")})
    else:
        model.set_trainable({n for n, _ in model.named_parameters()})

    # Raw ids -> channel indices; raises if a label is outside {0} u base.
    train_labels = np.stack(
        [split.mask_to_channels(m, include_novel=False) for m in train_masks])
    val_labels = np.stack(
        [split.mask_to_channels(m, include_novel=False) for m in val_masks])

    h, w = train_images.shape[2], train_images.shape[3]
    cached_train = cached_val = None
    if _encoder_frozen(model):
        cached_train = [encode_single(model, im) for im in train_images]
        cached_val = [encode_single(model, im) for im in val_images]

    def forward_batch(indices: np.ndarray) -> Tensor:
        if cached_train is not None:
            feats = _stack_features([cached_train[i] for i in indices])
            return model.decode(feats, (h, w))
        return model(train_images[indices])

    def default_validator(model_, epoch_) -> float:
        return _channel_miou(model_, val_images, val_labels, cached_val)

    validate = validator if validator is not None else default_validator
    opt = SGD(model.trainable_parameters(), cfg.sgd)
    rng = Rng(seed)
    count = train_images.shape[0]
    history: list[tuple[float, float]] = []
    best_score = -np.inf
    best_state: dict[str, np.ndarray] = {}
    for epoch in range(cfg.epochs):
        order = list(range(count))
        rng.spawn("epoch", epoch).shuffle(order)
        order = np.array(order)
        losses = []
        for start in range(0, count, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            logits = forward_batch(batch)
            probs = softmax(logits, axis=1)
            loss = cross_entropy(probs, train_labels[batch])
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        score = float(validate(model, epoch))
        history.append((float(np.mean(losses)), score))
        if score > best_score:
            best_score = score
            best_state = {n: arr.copy() for n, arr in model.state_dict().items()}
        log.info("epoch %d: loss %.4f val mIoU %.4f", epoch, history[-1][0], score)
    return best_state, history


def pretrain_backbone(model: SegModel, train_set, val_set, split: ClassSplit,
                      cfg: BaseTrainConfig, seed: int = 0):
    """Supervised stand-in for a generic pretrained backbone.

    Trains the whole model (encoder included) on images where every
    class is visible, the way a foundation backbone has seen instances
    of classes that a later protocol treats as novel. Pass ``train_set``
    with unrelabeled masks; the model must predict
    ``split.channel_count`` channels. Returns ``(encoder_state,
    history)`` with the same history layout as ``base_train``; the
    caller loads the result into a fresh model via
    ``load_encoder_state`` and discards the decoder trained here.
    """
    train_images, train_masks = _stack(train_set)
    val_images, val_masks = _stack(val_set)
    if train_images.shape[0] == 0 or val_images.shape[0] == 0:
        raise ValueError("empty dataset")
    if model.class_count != split.channel_count:
        raise ValueError(
            f"model predicts {model.class_count} channels, pretraining expects "
            f"{split.channel_count}")

    model.set_trainable({n for n, _ in model.named_parameters()})
    train_labels = np.stack(
        [split.mask_to_channels(m, include_novel=True) for m in train_masks])
    val_labels = np.stack(
        [split.mask_to_channels(m, include_novel=True) for m in val_masks])

    opt = SGD(model.trainable_parameters(), cfg.sgd)
    rng = Rng(seed)
    count = train_images.shape[0]
    history: list[tuple[float, float]] = []
    best_score = -np.inf
    best_state: dict[str, np.ndarray] = {}
    for epoch in range(cfg.epochs):
        order = list(range(count))
        rng.spawn("epoch", epoch).shuffle(order)
        order = np.array(order)
        losses = []
        for start in range(0, count, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            probs = softmax(model(train_images[batch]), axis=1)
            loss = cross_entropy(probs, train_labels[batch])
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        score = _channel_miou(model, val_images, val_labels)
        history.append((float(np.mean(losses)), score))
        if score > best_score:
            best_score = score
            best_state = {n: arr.copy() for n, arr in model.state_dict().items()
                          if n.startswith("encoder.")}
        log.info("pretrain epoch %d: loss %.4f val mIoU %.4f",
                 epoch, history[-1][0], score)
    return best_state, history


# ---------------------------------------------------------------------------
# stage two: support adaptation and query prediction


def adapt_on_support(model: SegModel, support_set, split: ClassSplit,
                     cfg: AdaptConfig, features=None):
    """Fit the adaptation surface on the support images.

    Each iteration runs the full support batch: forward, softmax,
    prediction alignment, cross-entropy against the novel-only masks,
    one SGD step on the trainable parameters. Returns the (mutated)
    model and the per-iteration loss history.

    ``features`` may carry precomputed per-image encoder output (a list
    as produced by ``encode_single``); the encoder is frozen here, so
    callers can cache it.
    """
    images, masks = _stack(support_set)
    if images.shape[0] == 0:
        raise ValueError("empty support set")
    if model.class_count != split.channel_count:
        raise ValueError(
            f"model predicts {model.class_count} channels; augment the decoder "
            f"to {split.channel_count} first")
    if not _encoder_frozen(model):
        raise ValueError("encoder must be frozen during adaptation")
    present = set(np.unique(masks).tolist()) - {0, IGNORE_ID}
    stray_base = sorted(present & set(split.base_ids))
    if stray_base:
        raise ValueError(f"support mask contains base-class ids {stray_base}")
    labels = np.stack(
        [split.mask_to_channels(m, include_novel=True) for m in masks])

    if features is None:
        features = [encode_single(model, im) for im in images]
    feats = _stack_features(features)
    h, w = images.shape[2], images.shape[3]

    if isinstance(model.decoder, UperNetLite):
        # The body below the classifier never trains here; run it once.
        with no_grad():
            fused = model.decoder.fused_map(feats)
        fused = Tensor(fused.data)
        step_logits = lambda: model.decoder.classify(fused, (h, w))
    else:
        step_logits = lambda: model.decode(feats, (h, w))

    # Same SGD flavor as the base stage (momentum 0.9) at the adaptation
    # rate; weight decay stays off so the inherited rows are not shrunk.
    opt = SGD(model.trainable_parameters(),
              SgdConfig(cfg.learning_rate, momentum=0.9, weight_decay=0.0))
    losses: list[float] = []
    for _ in range(cfg.iterations):
        probs = softmax(step_logits(), axis=1)
        aligned = adjust_prediction(probs, split)
        loss = cross_entropy(aligned, labels)
        loss.backward()
        opt.step()
        losses.append(float(loss.data))
    return model, losses


def run_query(model: SegModel, query_image: np.ndarray, features=None):
    """Predict one image with every channel competing (no alignment).

    Returns (probabilities [K,H,W], argmax labels [H,W]); labels are
    channel indices."""
    image = np.ascontiguousarray(query_image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"query image must be [3,H,W], got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    with no_grad():
        if features is not None:
            logits = model.decode(_stack_features([features]), (h, w))
        else:
            logits = model(image[None])
        probs = softmax(logits, axis=1).data[0]
    labels = np.argmax(probs, axis=0)
    return probs, labels


def episode_protocol(checkpoint: dict[str, np.ndarray], episode,
                     split: ClassSplit, model_config, adapt_config: AdaptConfig,
                     support_features=None, query_features=None):
    """One full episode: fresh model from the checkpoint, seeded decoder
    augmentation, support adaptation, query prediction.

    ``episode`` needs ``.supports`` (list of (image, mask) pairs),
    ``.query_image`` and ``.seed``. Nothing persists between episodes;
    the result is a pure function of checkpoint bytes, episode content
    and the seed. Returns (probabilities, channel-index labels).
    """
    model = build_model(model_config, split.base_channel_count, seed=0)
    model.load_state(checkpoint)
    augmented = augment_decoder(model, split, episode.seed)
    adapt_on_support(augmented, episode.supports, split, adapt_config,
                     features=support_features)
    return run_query(augmented, episode.query_image, features=query_features)
