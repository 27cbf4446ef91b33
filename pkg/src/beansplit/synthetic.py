"""Synthetic tray images with bean ellipses and split blotches.

Two bean tones are used and each tone's splits take the other tone's
colour, so per-pixel colour alone cannot separate split from seed coat;
only the surrounding context can.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import RETORT_TIMES, SampleRecord, format_manifest
from .imagecore import LabelMask, PixelClass, RgbImage, write_image

TRAY = (45, 45, 52)
LIGHT = (225, 200, 130)
DARK = (150, 115, 60)


def synthetic_pair(rng: np.random.Generator, size: int = 64, n_beans: int = 4,
                   noise: float = 6.0, splits: tuple[int, int] = (1, 4)) -> tuple[RgbImage, LabelMask]:
    """One image/mask pair; each bean gets ``rng.integers(*splits)`` split blotches."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w]
    labels = np.full((h, w), PixelClass.TRAY, dtype=np.uint8)
    rgb = np.empty((h, w, 3))
    rgb[:] = TRAY
    for _ in range(n_beans):
        for _attempt in range(20):
            a = rng.uniform(0.12, 0.2) * size
            b = rng.uniform(0.6, 0.9) * a
            cy, cx = rng.uniform(a, size - a, size=2)
            theta = rng.uniform(0, np.pi)
            dy, dx = yy - cy, xx - cx
            u = dx * np.cos(theta) + dy * np.sin(theta)
            v = -dx * np.sin(theta) + dy * np.cos(theta)
            inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
            grown = (u / (a + 2)) ** 2 + (v / (b + 2)) ** 2 <= 1.0
            if not (labels[grown] != PixelClass.TRAY).any():
                break
        else:
            continue
        light = rng.random() < 0.5
        coat, split = (LIGHT, DARK) if light else (DARK, LIGHT)
        labels[inside] = PixelClass.SEED_COAT
        rgb[inside] = coat
        for _s in range(rng.integers(*splits)):
            ry, rx = rng.uniform(1.5, 3.5, size=2)
            t = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0, 0.5)
            sy = cy + rad * b * np.sin(t)
            sx = cx + rad * a * np.cos(t)
            blob = inside & (((yy - sy) / ry) ** 2 + ((xx - sx) / rx) ** 2 <= 1.0)
            labels[blob] = PixelClass.SPLIT
            rgb[blob] = split
    rgb += rng.normal(0.0, noise, size=rgb.shape)
    return RgbImage(np.clip(np.rint(rgb), 0, 255).astype(np.uint8)), LabelMask(labels)


def synthetic_set(n: int, seed: int = 0, size: int = 64, **kwargs):
    rng = np.random.default_rng(seed)
    return [synthetic_pair(rng, size, **kwargs) for _ in range(n)]


def write_synthetic_study(out_dir, genotypes: int = 2, seed: int = 0, size: int = 64,
                          n_train: int = 8, n_val: int = 2) -> Path:
    """Write a balanced genotype x retort x replicate study with a manifest.

    Split counts grow with genotype index and retort time.  The first
    ``n_train`` samples are labeled train, the next ``n_val`` val, the
    rest score.  Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "img").mkdir(parents=True, exist_ok=True)
    (out / "lab").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    k = 0
    for g in range(genotypes):
        for ti, retort in enumerate(RETORT_TIMES):
            for rep in (1, 2):
                lo = 1 + g + ti // 2
                image, mask = synthetic_pair(rng, size, splits=(lo, lo + 2))
                name = f"g{g}_t{retort}_r{rep}"
                write_image(out / "img" / f"{name}.ppm", image)
                write_image(out / "lab" / f"{name}.pgm", mask)
                part = "train" if k < n_train else "val" if k < n_train + n_val else "score"
                intact = float(np.clip(5.0 - 0.8 * g - 0.3 * ti + rng.normal(0, 0.3), 1, 5))
                records.append(SampleRecord(f"img/{name}.ppm", f"lab/{name}.pgm", f"G{g}",
                                            retort, rep, part, round(intact, 2)))
                k += 1
    path = out / "manifest.csv"
    path.write_text(format_manifest(records), encoding="utf-8")
    return path
