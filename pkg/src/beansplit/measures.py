"""Bean split ratio, split extraction and the split-size histogram.

The split ratio is split pixels over bean (split + seed coat) pixels.  The
histogram distributes that same mass over N bins indexed by each split's
area relative to a maximum split area M, so its bins sum to the ratio.
Image-based estimates inherit projection effects: a split's pixel area
depends on its orientation to the camera, partially visible splits count
small, and touching splits merge into one component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BinCountMismatch, InvalidParameter, NoBeanPixels
from .imagecore import LabelMask, PixelClass

DEFAULT_BINS = 10
DEFAULT_CONNECTIVITY = 8


@dataclass(frozen=True, eq=False)
class SplitComponent:
    pixels: np.ndarray  # (area, 2) array of (row, col), scan order
    bbox: tuple[int, int, int, int]  # top, left, bottom, right (exclusive)

    @property
    def area(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class BshHistogram:
    bins: tuple[float, ...]
    max_split_area: float
    bean_area: int

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def total(self) -> float:
        return float(sum(self.bins))


def bsr(mask: LabelMask) -> float:
    split = mask.count(PixelClass.SPLIT)
    bean = split + mask.count(PixelClass.SEED_COAT)
    if bean == 0:
        raise NoBeanPixels("mask contains no bean pixels")
    return split / bean


def _offsets(connectivity: int):
    # already-visited neighbours in raster scan order
    if connectivity == 4:
        return ((0, -1), (-1, 0))
    if connectivity == 8:
        return ((0, -1), (-1, -1), (-1, 0), (-1, 1))
    raise InvalidParameter(f"connectivity must be 4 or 8, got {connectivity}")


def label_components(binary: np.ndarray, connectivity: int = DEFAULT_CONNECTIVITY) -> np.ndarray:
    """Two-pass sequential labeling with union-find.

    Returns an int32 label image: 0 background, components numbered 1..K
    in order of their first pixel in raster scan order.
    """
    binary = np.asarray(binary, dtype=bool)
    offsets = _offsets(connectivity)
    h, w = binary.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = [0]

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    rows, cols = np.nonzero(binary)
    for r, c in zip(rows.tolist(), cols.tolist()):
        best = 0
        for dr, dc in offsets:
            rr, cc = r + dr, c + dc
            if 0 <= rr and 0 <= cc < w:
                n = labels[rr, cc]
                if n:
                    n = find(n)
                    if best == 0:
                        best = n
                    elif n != best:
                        lo, hi = (n, best) if n < best else (best, n)
                        parent[hi] = lo
                        best = lo
        if best == 0:
            best = len(parent)
            parent.append(best)
        labels[r, c] = best

    # provisional labels are created in scan order, so each root is the
    # smallest label of its set; renumber roots by first appearance
    roots = np.array([find(i) for i in range(len(parent))], dtype=np.int32)
    order = np.zeros(len(parent), dtype=np.int32)
    uniq = np.unique(roots[1:])
    order[uniq] = np.arange(1, len(uniq) + 1, dtype=np.int32)
    return order[roots][labels]


def connected_components(binary: np.ndarray,
                         connectivity: int = DEFAULT_CONNECTIVITY) -> list[SplitComponent]:
    labels = label_components(binary, connectivity)
    rows, cols = np.nonzero(labels)
    ids = labels[rows, cols]
    order = np.argsort(ids, kind="stable")
    rows, cols, ids = rows[order], cols[order], ids[order]
    bounds = np.flatnonzero(np.diff(ids)) + 1
    comps = []
    for r, c in zip(np.split(rows, bounds), np.split(cols, bounds)):
        if len(r) == 0:
            continue
        comps.append(SplitComponent(
            np.stack([r, c], axis=1),
            (int(r.min()), int(c.min()), int(r.max()) + 1, int(c.max()) + 1),
        ))
    return comps


def bsh(areas: Sequence[float], bean_area: int, max_split_area: float,
        n_bins: int = DEFAULT_BINS) -> BshHistogram:
    """Histogram of split area fractions indexed by area / max_split_area.

    Split j adds ``areas[j] / bean_area`` to bin ``floor(n_bins * A_j / M)``
    (0-based); ratios >= 1 land in the top bin.
    """
    if bean_area <= 0 or max_split_area <= 0 or n_bins < 1:
        raise InvalidParameter("bean area, maximum split area and bin count must be positive")
    sums = [0] * n_bins
    for a in areas:
        if isinstance(a, (int, np.integer)) and isinstance(max_split_area, (int, np.integer)):
            idx = (int(a) * n_bins) // int(max_split_area)
        else:
            idx = int(np.floor(a * n_bins / max_split_area))
        sums[min(idx, n_bins - 1)] += a
    return BshHistogram(tuple(s / bean_area for s in sums), max_split_area, bean_area)


def emd_1d(a: BshHistogram | Sequence[float], b: BshHistogram | Sequence[float]) -> float:
    """L1 distance between running cumulative sums of raw bin masses."""
    av = np.asarray(a.bins if isinstance(a, BshHistogram) else a, dtype=np.float64)
    bv = np.asarray(b.bins if isinstance(b, BshHistogram) else b, dtype=np.float64)
    if av.shape != bv.shape:
        raise BinCountMismatch(f"{av.size} bins vs {bv.size} bins")
    return float(np.abs(np.cumsum(av) - np.cumsum(bv)).sum())


def mask_bsh(mask: LabelMask, max_split_area: float, n_bins: int = DEFAULT_BINS,
             connectivity: int = DEFAULT_CONNECTIVITY) -> tuple[BshHistogram, list[SplitComponent]]:
    bean = mask.count(PixelClass.SPLIT) + mask.count(PixelClass.SEED_COAT)
    comps = connected_components(mask.labels == PixelClass.SPLIT, connectivity)
    return bsh([c.area for c in comps], bean, max_split_area, n_bins), comps


def estimate_max_split_area(masks, connectivity: int = DEFAULT_CONNECTIVITY) -> int:
    """Largest connected bean region over masks of non-touching beans."""
    best = 0
    for mask in masks:
        for comp in connected_components(mask.labels != PixelClass.TRAY, connectivity):
            best = max(best, comp.area)
    if best == 0:
        raise NoBeanPixels("no bean regions in the calibration masks")
    return best
