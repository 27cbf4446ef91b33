"""Image -> 3-class mask -> split ratio and histogram."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NoBeanPixels
from .imagecore import LabelMask, PixelClass, RgbImage
from .measures import DEFAULT_BINS, DEFAULT_CONNECTIVITY, BshHistogram, bsh, connected_components
from .segnet.network import ModelKind, NetworkWeights
from .segnet.serialize import load_weights, weights_id
from .segnet.train import class_probability


@dataclass(frozen=True)
class PipelineConfig:
    bean_weights: str
    split_weights: str
    split_threshold: float
    max_split_area: float
    bean_threshold: float = 0.5
    n_bins: int = DEFAULT_BINS
    connectivity: int = DEFAULT_CONNECTIVITY
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        for name in ("split_threshold", "bean_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} {v} outside [0, 1]")
        if self.max_split_area <= 0 or self.n_bins < 1:
            raise DataError("max_split_area and n_bins must be positive")
        if self.connectivity not in (4, 8):
            raise DataError("connectivity must be 4 or 8")

    @classmethod
    def from_json(cls, text: str, base_dir=".") -> "PipelineConfig":
        d = json.loads(text)
        try:
            return cls(**d, base_dir=Path(base_dir))
        except TypeError as exc:
            raise DataError(f"bad pipeline config: {exc}") from exc

    @classmethod
    def read(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_json(path.read_text(encoding="utf-8"), path.parent)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


@dataclass
class Pipeline:
    config: PipelineConfig
    bean: NetworkWeights
    split: NetworkWeights

    def __post_init__(self):
        if self.bean.kind is not ModelKind.BEAN_VS_TRAY:
            raise DataError(f"bean weights are a {self.bean.kind.value} model")
        if self.split.kind is not ModelKind.SPLIT_VS_SEED_COAT:
            raise DataError(f"split weights are a {self.split.kind.value} model")
        self.bean_id = weights_id(self.bean)
        self.split_id = weights_id(self.split)
        c = self.config
        ident = {
            "bean_weights": self.bean_id,
            "split_weights": self.split_id,
            "bean_threshold": c.bean_threshold,
            "split_threshold": c.split_threshold,
            "max_split_area": c.max_split_area,
            "n_bins": c.n_bins,
            "connectivity": c.connectivity,
        }
        blob = json.dumps(ident, sort_keys=True, separators=(",", ":")).encode()
        self.config_hash = hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def load(cls, config: PipelineConfig) -> "Pipeline":
        return cls(config, load_weights(config.resolve(config.bean_weights)),
                   load_weights(config.resolve(config.split_weights)))


@dataclass(frozen=True)
class SampleMeasures:
    image_id: str
    bsr: float
    bsh: BshHistogram
    n_splits: int
    split_px: int
    seedcoat_px: int
    provenance: dict

    @property
    def bean_px(self) -> int:
        return self.split_px + self.seedcoat_px

    def to_json(self) -> dict:
        p = self.provenance
        return {
            "image": self.image_id,
            "bsr": self.bsr,
            "bsh": list(self.bsh.bins),
            "n_splits": self.n_splits,
            "split_px": self.split_px,
            "bean_px": self.bean_px,
            "M": self.bsh.max_split_area,
            "N": self.bsh.n_bins,
            "threshold": p["split_threshold"],
            "weights_id": f"{p['bean_weights']}+{p['split_weights']}",
            "config_hash": p["config_hash"],
        }


def segment(pipeline: Pipeline, image: RgbImage) -> tuple[LabelMask, np.ndarray]:
    """3-class mask and per-pixel (tray, seed coat, split) probabilities."""
    c = pipeline.config
    p_bean = class_probability(pipeline.bean, image)
    p_split = class_probability(pipeline.split, image)
    bean = p_bean >= c.bean_threshold
    split = bean & (p_split >= c.split_threshold)
    labels = np.full(bean.shape, PixelClass.TRAY, dtype=np.uint8)
    labels[bean] = PixelClass.SEED_COAT
    labels[split] = PixelClass.SPLIT
    probs = np.stack([1.0 - p_bean, p_bean * (1.0 - p_split), p_bean * p_split], axis=-1)
    return LabelMask(labels), probs


def measures_from_mask(mask: LabelMask, max_split_area: float, n_bins: int = DEFAULT_BINS,
                       connectivity: int = DEFAULT_CONNECTIVITY, image_id: str = "",
                       provenance: dict | None = None) -> SampleMeasures:
    split_px = mask.count(PixelClass.SPLIT)
    seed_px = mask.count(PixelClass.SEED_COAT)
    bean_px = split_px + seed_px
    if bean_px == 0:
        raise NoBeanPixels(f"no bean pixels detected in {image_id or 'image'}")
    comps = connected_components(mask.labels == PixelClass.SPLIT, connectivity)
    hist = bsh([c.area for c in comps], bean_px, max_split_area, n_bins)
    return SampleMeasures(image_id, split_px / bean_px, hist, len(comps), split_px, seed_px,
                          dict(provenance or {}))


def analyze_image(pipeline: Pipeline | PipelineConfig, image: RgbImage,
                  image_id: str = "") -> SampleMeasures:
    if isinstance(pipeline, PipelineConfig):
        pipeline = Pipeline.load(pipeline)
    c = pipeline.config
    mask, _ = segment(pipeline, image)
    prov = {
        "bean_weights": pipeline.bean_id,
        "split_weights": pipeline.split_id,
        "bean_threshold": c.bean_threshold,
        "split_threshold": c.split_threshold,
        "config_hash": pipeline.config_hash,
    }
    return measures_from_mask(mask, c.max_split_area, c.n_bins, c.connectivity, image_id, prov)


def write_scores(path, probs: np.ndarray) -> None:
    """Raw little-endian float32 scores plus a ``<path>.json`` shape companion."""
    path = Path(path)
    h, w, ch = probs.shape
    path.write_bytes(np.ascontiguousarray(probs, dtype="<f4").tobytes())
    Path(str(path) + ".json").write_text(json.dumps({"width": w, "height": h, "channels": ch}))


def read_scores(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    shape = (meta["height"], meta["width"], meta["channels"])
    if data.size != shape[0] * shape[1] * shape[2]:
        raise DataError(f"score file holds {data.size} values, companion says {shape}")
    return data.reshape(shape)
