"""Study-level statistics: correlation with intactness ratings, two-way ANOVA,
method-of-moments variance components and entry-mean heritability.

Designs must be balanced and complete (every genotype x retort cell holds
the same number r >= 2 of replicates).
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from .errors import (
    DataError,
    InsufficientReplication,
    LengthMismatch,
    UnbalancedDesign,
    UndefinedCorrelation,
    ZeroVariance,
)

STUDY_COLUMNS = ("genotype", "retort_min", "replicate", "trait", "value")


@dataclass(frozen=True)
class StudyObservation:
    genotype: str
    retort_min: int
    replicate: int
    value: float
    trait: str = "bsr"
    intactness: float | None = None


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    ss: float
    ms: float
    f: float | None = None
    p: float | None = None


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple[AnovaRow, ...]
    ss_total: float
    g: int
    t: int
    r: int

    def __getitem__(self, source: str) -> AnovaRow:
        for row in self.rows:
            if row.source == source:
                return row
        raise KeyError(source)

    def to_dict(self) -> list[dict]:
        return [row.__dict__.copy() for row in self.rows]


@dataclass(frozen=True)
class VarianceComponents:
    sigma2_g: float
    sigma2_gt: float
    sigma2_e: float
    t: int
    r: int
    # untruncated moment estimates (g, gt, e)
    raw: tuple[float, float, float] = (0.0, 0.0, 0.0)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.size} vs {y.size} values")
    if x.size < 2:
        raise UndefinedCorrelation("need at least two pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("an input is constant")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def rater_loo_correlations(ratings: np.ndarray) -> np.ndarray:
    """Correlation of each rater with the mean of the other raters.

    ``ratings`` is (samples, raters); NaN marks a missing rating.
    """
    ratings = np.asarray(ratings, dtype=np.float64)
    out = np.empty(ratings.shape[1])
    for k in range(ratings.shape[1]):
        others = np.delete(ratings, k, axis=1)
        ref = np.nanmean(others, axis=1)
        own = ratings[:, k]
        ok = ~np.isnan(own) & ~np.isnan(ref)
        out[k] = pearson_r(own[ok], ref[ok])
    return out


def design_array(observations: Iterable[StudyObservation], trait: str | None = None):
    """Arrange a balanced design as a (genotype, retort, replicate) array.

    Returns ``(values, genotypes, retorts)``.
    """
    cells = defaultdict(list)
    for ob in observations:
        if trait is None or ob.trait == trait:
            cells[(ob.genotype, ob.retort_min)].append((ob.replicate, ob.value))
    if not cells:
        raise DataError(f"no observations for trait {trait!r}")
    genotypes = sorted({g for g, _ in cells})
    retorts = sorted({t for _, t in cells})
    sizes = {len(v) for v in cells.values()}
    if len(cells) != len(genotypes) * len(retorts) or len(sizes) != 1:
        raise UnbalancedDesign(
            f"{len(cells)} of {len(genotypes) * len(retorts)} genotype x retort cells present, "
            f"replicates per cell {sorted(sizes)}"
        )
    r = sizes.pop()
    if r < 2:
        raise InsufficientReplication("at least two replicates per cell are required")
    y = np.empty((len(genotypes), len(retorts), r))
    for i, g in enumerate(genotypes):
        for j, t in enumerate(retorts):
            y[i, j] = [v for _, v in sorted(cells[(g, t)], key=lambda rv: rv[0])]
    return y, genotypes, retorts


def anova_array(y: np.ndarray) -> AnovaTable:
    """Fixed-effects two-way ANOVA with interaction on a (g, t, r) array."""
    g, t, r = y.shape
    if r < 2:
        raise InsufficientReplication("at least two replicates per cell are required")
    grand = y.mean()
    mg = y.mean(axis=(1, 2))
    mt = y.mean(axis=(0, 2))
    mc = y.mean(axis=2)
    ss_g = t * r * float(((mg - grand) ** 2).sum())
    ss_t = g * r * float(((mt - grand) ** 2).sum())
    ss_gt = r * float(((mc - mg[:, None] - mt[None, :] + grand) ** 2).sum())
    ss_e = float(((y - mc[..., None]) ** 2).sum())
    ss_total = float(((y - grand) ** 2).sum())
    df_g, df_t, df_gt, df_e = g - 1, t - 1, (g - 1) * (t - 1), g * t * (r - 1)
    ms_e = ss_e / df_e
    rows = []
    for name, ss, df in (("Genotype", ss_g, df_g), ("Retort", ss_t, df_t), ("GxT", ss_gt, df_gt)):
        if df == 0:
            rows.append(AnovaRow(name, 0, ss, float("nan")))
            continue
        ms = ss / df
        if ms_e > 0:
            f = ms / ms_e
            p = float(sps.f.sf(f, df, df_e))
        else:
            f, p = float("inf") if ms > 0 else float("nan"), 0.0 if ms > 0 else float("nan")
        rows.append(AnovaRow(name, df, ss, ms, f, p))
    rows.append(AnovaRow("Residual", df_e, ss_e, ms_e))
    return AnovaTable(tuple(rows), ss_total, g, t, r)


def anova_two_way(observations: Iterable[StudyObservation], trait: str | None = None) -> AnovaTable:
    y, _, _ = design_array(observations, trait)
    return anova_array(y)


def components_from_table(table: AnovaTable) -> VarianceComponents:
    """Moment estimates from expected mean squares of the random model."""
    ms_g = table["Genotype"].ms if table.g > 1 else 0.0
    ms_gt = table["GxT"].ms if table.t > 1 else table["Residual"].ms
    ms_e = table["Residual"].ms
    r, t = table.r, table.t
    raw_e = ms_e
    raw_gt = (ms_gt - ms_e) / r
    raw_g = (ms_g - ms_gt) / (r * t)
    return VarianceComponents(max(raw_g, 0.0), max(raw_gt, 0.0), max(raw_e, 0.0), t, r,
                              (raw_g, raw_gt, raw_e))


def variance_components(observations: Iterable[StudyObservation],
                        trait: str | None = None) -> VarianceComponents:
    return components_from_table(anova_two_way(observations, trait))


def heritability(c: VarianceComponents) -> float:
    """Entry-mean heritability sigma2_g / (sigma2_g + sigma2_gt/t + sigma2_e/(t r))."""
    if c.t < 1 or c.r < 1:
        raise DataError("t and r must be >= 1")
    denom = c.sigma2_g + c.sigma2_gt / c.t + c.sigma2_e / (c.t * c.r)
    if denom <= 0:
        raise ZeroVariance("all variance components are zero")
    return c.sigma2_g / denom


def simulate_design(rng: np.random.Generator, g: int = 20, t: int = 5, r: int = 2,
                    sigma2_g: float = 0.0, sigma2_gt: float = 0.0, sigma2_e: float = 1.0,
                    retort_effects: Sequence[float] | None = None) -> np.ndarray:
    """Draw a (g, t, r) array from the random two-way model."""
    y = rng.normal(0.0, np.sqrt(sigma2_g), size=(g, 1, 1))
    y = y + rng.normal(0.0, np.sqrt(sigma2_gt), size=(g, t, 1))
    y = y + rng.normal(0.0, np.sqrt(sigma2_e), size=(g, t, r))
    if retort_effects is not None:
        y = y + np.asarray(retort_effects, dtype=np.float64)[None, :, None]
    return y


def read_study_csv(text: str) -> list[StudyObservation]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in STUDY_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise DataError(f"study CSV lacks column(s): {', '.join(missing)}")
    out = []
    for row in reader:
        try:
            out.append(StudyObservation(row["genotype"], int(row["retort_min"]),
                                        int(row["replicate"]), float(row["value"]), row["trait"]))
        except ValueError as exc:
            raise DataError(f"bad study row {row}: {exc}") from exc
    return out


def write_study_csv(observations: Iterable[StudyObservation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for ob in observations:
        w.writerow([ob.genotype, ob.retort_min, ob.replicate, ob.trait, repr(float(ob.value))])
    return buf.getvalue()


def trait_summary(observations: Sequence[StudyObservation], trait: str) -> dict:
    """ANOVA table, variance components and heritability of one trait."""
    table = anova_two_way(observations, trait)
    comps = components_from_table(table)
    try:
        h2 = heritability(comps)
    except ZeroVariance:
        h2 = None
    return {
        "anova": table.to_dict(),
        "components": {
            "sigma2_g": comps.sigma2_g,
            "sigma2_gt": comps.sigma2_gt,
            "sigma2_e": comps.sigma2_e,
            "t": comps.t,
            "r": comps.r,
        },
        "heritability": h2,
    }
