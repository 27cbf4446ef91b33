"""Study manifest, labeled-pair loading, dihedral augmentation and padding."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateImage,
    EmptyPartition,
    InvalidRetortTime,
    ManifestError,
    MissingColumn,
    MissingLabel,
)
from .imagecore import LabelMask, PixelClass, RgbImage, read_image

MANIFEST_COLUMNS = (
    "image_path",
    "label_path",
    "genotype",
    "retort_min",
    "replicate",
    "partition",
    "intactness",
)
RETORT_TIMES = (10, 15, 20, 30, 45)
REPLICATES = (1, 2)
PARTITIONS = ("train", "val", "score")


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    label_path: Optional[str]
    genotype: str
    retort_min: int
    replicate: int
    partition: str
    intactness: Optional[float] = None


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    base_dir: Path = field(default_factory=Path)

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(r.partition for r in self.records)
        return {p: c.get(p, 0) for p in PARTITIONS}

    def partition(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.partition == name]

    def require(self, name: str) -> list[SampleRecord]:
        recs = self.partition(name)
        if not recs:
            raise EmptyPartition(f"manifest has no '{name}' records")
        return recs

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def load_image(self, record: SampleRecord) -> RgbImage:
        img = read_image(self.resolve(record.image_path))
        if not isinstance(img, RgbImage):
            raise ManifestError(f"{record.image_path} is not a P6 image")
        return img

    def load_pair(self, record: SampleRecord) -> tuple[RgbImage, LabelMask]:
        if record.label_path is None:
            raise MissingLabel(f"{record.image_path} has no label")
        img = self.load_image(record)
        mask = read_image(self.resolve(record.label_path))
        if not isinstance(mask, LabelMask):
            raise ManifestError(f"{record.label_path} is not a P5 label mask")
        if mask.labels.shape != img.pixels.shape[:2]:
            raise DimensionMismatch(f"{record.image_path} and {record.label_path} differ in size")
        return img, mask

    def labeled_pairs(self, name: str) -> list[tuple[RgbImage, LabelMask]]:
        return [self.load_pair(r) for r in self.require(name)]


def _parse_row(lineno: int, row: dict[str, str]) -> SampleRecord:
    def fail(msg: str, exc=ManifestError):
        raise exc(f"line {lineno}: {msg}")

    image_path = (row["image_path"] or "").strip()
    if not image_path:
        fail("empty image_path")
    label_path = (row["label_path"] or "").strip() or None
    genotype = (row["genotype"] or "").strip()
    if not genotype:
        fail("empty genotype")
    try:
        retort = int(row["retort_min"])
    except (TypeError, ValueError):
        fail(f"retort_min {row['retort_min']!r} is not an integer", InvalidRetortTime)
    if retort not in RETORT_TIMES:
        fail(f"retort_min {retort} not in {RETORT_TIMES}", InvalidRetortTime)
    try:
        replicate = int(row["replicate"])
    except (TypeError, ValueError):
        fail(f"replicate {row['replicate']!r} is not an integer")
    if replicate not in REPLICATES:
        fail(f"replicate {replicate} not in {REPLICATES}")
    partition = (row["partition"] or "").strip()
    if partition not in PARTITIONS:
        fail(f"partition {partition!r} not in {PARTITIONS}")
    if partition in ("train", "val") and label_path is None:
        fail(f"{partition} record {image_path} has no label_path", MissingLabel)
    raw = (row["intactness"] or "").strip()
    intactness = None
    if raw:
        try:
            intactness = float(raw)
        except ValueError:
            fail(f"intactness {raw!r} is not a number")
        if not 1.0 <= intactness <= 5.0:
            fail(f"intactness {intactness} outside [1, 5]")
    return SampleRecord(image_path, label_path, genotype, retort, replicate, partition, intactness)


def load_manifest(text: str, base_dir=None) -> DatasetManifest:
    """Parse and validate manifest CSV text; row order is preserved."""
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"manifest lacks column(s): {', '.join(missing)}")
    records = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        rec = _parse_row(lineno, row)
        if rec.image_path in seen:
            raise DuplicateImage(f"line {lineno}: image {rec.image_path} listed twice")
        seen.add(rec.image_path)
        records.append(rec)
    return DatasetManifest(records, Path(base_dir) if base_dir is not None else Path("."))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return load_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)


def format_manifest(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in records:
        w.writerow([
            r.image_path,
            r.label_path or "",
            r.genotype,
            r.retort_min,
            r.replicate,
            r.partition,
            "" if r.intactness is None else repr(r.intactness),
        ])
    return buf.getvalue()


def dihedral(a: np.ndarray, k: int) -> np.ndarray:
    """Element ``k`` (0..7) of the dihedral group acting on the first two axes.

    k = 0..3 rotate by 90*k degrees; 4..7 flip horizontally first.
    """
    if k >= 4:
        a = a[:, ::-1]
    return np.ascontiguousarray(np.rot90(a, k % 4, axes=(0, 1)))


def dihedral_variants(image: RgbImage, mask: LabelMask) -> list[tuple[RgbImage, LabelMask]]:
    if image.pixels.shape[:2] != mask.labels.shape:
        raise DimensionMismatch(
            f"image {image.pixels.shape[:2]} and mask {mask.labels.shape} differ in size"
        )
    return [
        (RgbImage(dihedral(image.pixels, k)), LabelMask(dihedral(mask.labels, k)))
        for k in range(8)
    ]


def pad_to_multiple(raster, m: int):
    """Pad an RgbImage or LabelMask so both dims are multiples of ``m``.

    Images are edge-replicated, masks filled with Tray.  The original sits
    centered; returns ``(padded, (top, left))``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    arr = raster.pixels if isinstance(raster, RgbImage) else raster.labels
    h, w = arr.shape[:2]
    H = -(-h // m) * m
    W = -(-w // m) * m
    top, left = (H - h) // 2, (W - w) // 2
    if (H, W) == (h, w):
        return raster, (0, 0)
    pad = [(top, H - h - top), (left, W - w - left)]
    if isinstance(raster, RgbImage):
        return RgbImage(np.pad(arr, pad + [(0, 0)], mode="edge")), (top, left)
    return LabelMask(np.pad(arr, pad, mode="constant", constant_values=PixelClass.TRAY)), (top, left)


def crop(raster, offset: tuple[int, int], height: int, width: int):
    top, left = offset
    if isinstance(raster, RgbImage):
        return RgbImage(raster.pixels[top:top + height, left:left + width])
    if isinstance(raster, LabelMask):
        return LabelMask(raster.labels[top:top + height, left:left + width])
    return raster[top:top + height, left:left + width]


def iter_augmented(pairs) -> Iterator[tuple[RgbImage, LabelMask]]:
    for image, mask in pairs:
        yield from dihedral_variants(image, mask)
