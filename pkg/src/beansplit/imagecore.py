"""Raster containers, binary PPM/PGM codec and HSV conversion."""

from __future__ import annotations

import colorsys
import re
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DimensionMismatch, MalformedHeader, TruncatedPayload, UnknownClassCode


class PixelClass(IntEnum):
    TRAY = 0
    SEED_COAT = 1
    SPLIT = 2


# gray level on disk <-> class
CLASS_CODES = {0: PixelClass.TRAY, 128: PixelClass.SEED_COAT, 255: PixelClass.SPLIT}
_CODE_OF_CLASS = np.array([0, 128, 255], dtype=np.uint8)
_CLASS_OF_CODE = np.full(256, 255, dtype=np.uint8)
for _code, _cls in CLASS_CODES.items():
    _CLASS_OF_CODE[_code] = _cls


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster stored as a ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionMismatch(f"RGB raster must be HxWx3 with H,W >= 1, got {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel :class:`PixelClass` codes as a ``(height, width)`` uint8 array."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise DimensionMismatch(f"label raster must be HxW with H,W >= 1, got {lab.shape}")
        if lab.size and lab.max() > PixelClass.SPLIT:
            raise UnknownClassCode(f"class index {int(lab.max())} is not a valid class")
        object.__setattr__(self, "labels", lab)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def count(self, cls: PixelClass) -> int:
        return int(np.count_nonzero(self.labels == cls))

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Per-pixel, per-class real scores, ``(height, width, channels)``.

    Networks emit logits; :meth:`softmax` gives class probabilities.
    """

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores)
        if s.ndim != 3:
            raise DimensionMismatch(f"score map must be HxWxC, got {s.shape}")
        object.__setattr__(self, "scores", s)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def channels(self) -> int:
        return self.scores.shape[2]

    def softmax(self) -> np.ndarray:
        return softmax(self.scores)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class HsvPixel:
    hue: float  # degrees, [0, 360)
    saturation: float
    value: float


_HEADER = re.compile(rb"\A(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s")


def decode_image(data: bytes) -> RgbImage | LabelMask:
    """Decode a binary PPM (P6) into an RgbImage or a PGM (P5) into a LabelMask."""
    m = _HEADER.match(data)
    if m is None:
        raise MalformedHeader("expected a 'P6' or 'P5' header with width, height and maxval")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if w < 1 or h < 1:
        raise MalformedHeader(f"nonpositive dimensions {w}x{h}")
    if maxval != 255:
        raise MalformedHeader(f"maxval must be 255, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    payload = data[m.end():m.end() + need]
    if len(payload) < need:
        raise TruncatedPayload(f"expected {need} payload bytes, found {len(payload)}")
    raw = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        return RgbImage(raw.reshape(h, w, 3))
    classes = _CLASS_OF_CODE[raw]
    bad = classes == 255
    if bad.any():
        raise UnknownClassCode(f"gray value {int(raw[bad][0])} is not a class code (0, 128, 255)")
    return LabelMask(classes.reshape(h, w))


def encode_image(raster: RgbImage | LabelMask) -> bytes:
    if isinstance(raster, RgbImage):
        header = f"P6 {raster.width} {raster.height} 255\n".encode("ascii")
        return header + raster.pixels.tobytes()
    if isinstance(raster, LabelMask):
        header = f"P5 {raster.width} {raster.height} 255\n".encode("ascii")
        return header + _CODE_OF_CLASS[raster.labels].tobytes()
    raise TypeError(f"cannot encode {type(raster).__name__}")


def read_image(path) -> RgbImage | LabelMask:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def write_image(path, raster: RgbImage | LabelMask) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_image(raster))


def rgb_to_hsv(r: int, g: int, b: int) -> HsvPixel:
    h, s, v = colorsys.rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0)
    hue = h * 360.0
    if hue >= 360.0:
        hue = 0.0
    return HsvPixel(hue, s, v)


def hsv_features(pixels: np.ndarray) -> np.ndarray:
    """Vectorized hexcone HSV for an ``(..., 3)`` uint8 array.

    Returns float64 ``(..., 3)`` with hue in degrees; achromatic hue is 0.
    """
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = (h / 6.0) % 1.0
    hue = np.where(chroma, h * 360.0, 0.0)
    hue = np.where(hue >= 360.0, 0.0, hue)
    return np.stack([hue, sat, maxc], axis=-1)
