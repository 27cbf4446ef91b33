"""Training loop for the two segmentation models."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..dataset import DatasetManifest, crop, dihedral, pad_to_multiple
from ..errors import EmptyPartition, NoPositives, NonFiniteLoss
from ..evaluation import average_precision
from ..imagecore import LabelMask, PixelClass, RgbImage, softmax
from .network import (
    ModelKind,
    NetworkConfig,
    NetworkWeights,
    backward,
    forward,
    masked_cross_entropy,
    normalize_input,
)
from .optim import OptimizerState, adadelta_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 70
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6
    threshold: float = 0.5
    fast: bool = False  # float32 arithmetic instead of float64

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def dtype(self):
        return np.float32 if self.fast else np.float64


@dataclass
class TrainingHistory:
    loss: list[float] = field(default_factory=list)
    val_ap: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,loss,val_ap\n")
        for i, (l, a) in enumerate(zip(self.loss, self.val_ap), start=1):
            buf.write(f"{i},{l!r},{a!r}\n")
        return buf.getvalue()


def targets_for(kind: ModelKind, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Binary class targets and the valid-pixel mask for a model kind."""
    if kind is ModelKind.BEAN_VS_TRAY:
        return (labels != PixelClass.TRAY).astype(np.intp), np.ones(labels.shape, bool)
    return (labels == PixelClass.SPLIT).astype(np.intp), labels != PixelClass.TRAY


def class_probability(weights: NetworkWeights, image: RgbImage, dtype=np.float64) -> np.ndarray:
    """Softmax probability of class 1 at every pixel of an arbitrarily sized image."""
    padded, offset = pad_to_multiple(image, weights.config.divisor)
    logits, _ = forward(weights, normalize_input(weights.config, padded.pixels, dtype))
    prob = softmax(logits)[..., 1]
    return crop(prob, offset, image.height, image.width)


def channel_mean(images) -> tuple[float, float, float]:
    total = np.zeros(3)
    count = 0
    for img in images:
        total += img.pixels.reshape(-1, 3).sum(axis=0, dtype=np.float64)
        count += img.height * img.width
    return tuple(float(v) for v in total / (255.0 * count))


def validation_ap(weights: NetworkWeights, pairs, dtype=np.float64) -> float:
    """Pooled pixel AP of class 1 over the valid pixels of every pair."""
    scores, labels = [], []
    for image, mask in pairs:
        prob = class_probability(weights, image, dtype)
        t, valid = targets_for(weights.kind, mask.labels)
        scores.append(prob[valid])
        labels.append(t[valid])
    if not scores:
        return math.nan
    try:
        return average_precision(np.concatenate(scores), np.concatenate(labels))
    except NoPositives:
        return math.nan


def _prepare(kind, image: RgbImage, mask: LabelMask, config: NetworkConfig, dtype):
    padded, offset = pad_to_multiple(image, config.divisor)
    pmask, _ = pad_to_multiple(mask, config.divisor)
    targets, valid = targets_for(kind, pmask.labels)
    inside = np.zeros(valid.shape, bool)
    top, left = offset
    inside[top:top + mask.height, left:left + mask.width] = True
    return normalize_input(config, padded.pixels, dtype), targets, valid & inside


def train_on_pairs(kind: ModelKind, train_pairs, val_pairs, config: NetworkConfig,
                   train_cfg: TrainConfig, init: NetworkWeights | None = None,
                   on_epoch=None) -> tuple[NetworkWeights, TrainingHistory]:
    """Train on in-memory (image, mask) pairs.

    The train pairs are expanded to their 8 dihedral variants and visited
    one image per step in a seeded random order each epoch.  The input
    channel mean of the (unaugmented) train images is written into the
    returned config.
    """
    if not train_pairs:
        raise EmptyPartition("no training images")
    dtype = train_cfg.dtype
    config = NetworkConfig(**{**config.to_dict(),
                              "input_mean": channel_mean(img for img, _ in train_pairs)})
    rng = np.random.default_rng(train_cfg.seed)
    if init is None:
        weights = NetworkWeights.initialize(config, kind, int(rng.integers(2**31)), dtype)
    else:
        weights = NetworkWeights(config, kind, {k: v.astype(dtype) for k, v in init.params.items()})
    # (pair index, dihedral element); rasters are transformed per step
    samples = [(i, k) for i, (_, m) in enumerate(train_pairs)
               if targets_for(kind, m.labels)[1].any() for k in range(8)]
    if not samples:
        raise EmptyPartition("every training pixel is ignored for this model kind")
    state = OptimizerState.fresh(weights.params, train_cfg.rho, train_cfg.epsilon)
    history = TrainingHistory()
    for epoch in range(1, train_cfg.epochs + 1):
        total = 0.0
        for idx in rng.permutation(len(samples)):
            i, k = samples[idx]
            image, mask = train_pairs[i]
            x, targets, valid = _prepare(
                kind, RgbImage(dihedral(image.pixels, k)), LabelMask(dihedral(mask.labels, k)),
                config, dtype)
            logits, tape = forward(weights, x)
            loss, dlogits = masked_cross_entropy(logits, targets, valid)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} in epoch {epoch}")
            grads, _ = backward(weights, dlogits, tape)
            params, state = adadelta_step(weights.params, grads, state)
            weights = NetworkWeights(config, kind, params)
            total += loss
        history.loss.append(total / len(samples))
        history.val_ap.append(validation_ap(weights, val_pairs, dtype))
        log.info("epoch %d loss %.6f val_ap %.4f", epoch, history.loss[-1], history.val_ap[-1])
        if on_epoch is not None:
            on_epoch(epoch, history)
    return weights, history


def train_model(kind: ModelKind, manifest: DatasetManifest, config: NetworkConfig,
                train_cfg: TrainConfig, **kwargs) -> tuple[NetworkWeights, TrainingHistory]:
    """Train one model from the manifest's train partition, validating on ``val``."""
    train_pairs = manifest.labeled_pairs("train")
    val_pairs = [manifest.load_pair(r) for r in manifest.partition("val")]
    return train_on_pairs(kind, train_pairs, val_pairs, config, train_cfg, **kwargs)
