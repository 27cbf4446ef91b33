"""Full-dataset checks, run only when the published image set is available.

Set ``BEANSPLIT_DATASET`` to a directory holding ``manifest.csv`` (paths
relative to it).  Training both models at the default configuration takes
hours on one core; pre-trained weights can be supplied through
``BEANSPLIT_BEAN_WEIGHTS`` and ``BEANSPLIT_SPLIT_WEIGHTS`` instead.
``BEANSPLIT_RETORT_SERIES`` optionally names three comma-separated image
paths (relative to the dataset) of one genotype at increasing retort times.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from beansplit.dataset import read_manifest
from beansplit.evaluation import calibrate_threshold, evaluate_split_scores
from beansplit.imagecore import read_image
from beansplit.measures import estimate_max_split_area
from beansplit.pipeline import Pipeline, PipelineConfig, analyze_image
from beansplit.segnet import ModelKind, NetworkConfig, TrainConfig, load_weights, train_model
from beansplit.segnet.train import class_probability

DATASET = os.environ.get("BEANSPLIT_DATASET")

pytestmark = [
    pytest.mark.dataset,
    pytest.mark.skipif(not DATASET, reason="BEANSPLIT_DATASET not set"),
]


@pytest.fixture(scope="module")
def trained():
    manifest = read_manifest(Path(DATASET) / "manifest.csv")
    models = {}
    for kind, var in ((ModelKind.BEAN_VS_TRAY, "BEANSPLIT_BEAN_WEIGHTS"),
                      (ModelKind.SPLIT_VS_SEED_COAT, "BEANSPLIT_SPLIT_WEIGHTS")):
        if os.environ.get(var):
            models[kind] = load_weights(os.environ[var])
        else:
            models[kind], _ = train_model(kind, manifest, NetworkConfig(), TrainConfig(fast=True))
    val = manifest.labeled_pairs("val")
    scored = [(class_probability(models[ModelKind.SPLIT_VS_SEED_COAT], img), m) for img, m in val]
    m_area = estimate_max_split_area([m for _, m in manifest.labeled_pairs("train")])
    return manifest, models, val, scored, m_area


def test_split_ap_and_bsr_error(trained):
    _, _, val, scored, m_area = trained
    threshold = calibrate_threshold(scored, "iou", exclude_zero=True).chosen
    report = evaluate_split_scores([s for s, _ in scored], [m for _, m in val], threshold, m_area,
                                   exclude_zero=True)
    assert report.ap >= 0.75
    assert report.bsr_error_pct <= 15.0


def test_calibrated_threshold_range(trained):
    _, _, _, scored, _ = trained
    assert 0.80 <= calibrate_threshold(scored, "iou", exclude_zero=True).chosen <= 0.95


@pytest.mark.skipif(not os.environ.get("BEANSPLIT_RETORT_SERIES"), reason="retort series not named")
def test_bsr_increases_with_retort_time(trained):
    manifest, models, _, scored, m_area = trained
    threshold = calibrate_threshold(scored, "iou", exclude_zero=True).chosen
    cfg = PipelineConfig("bean", "split", threshold, m_area)
    pipe = Pipeline(cfg, models[ModelKind.BEAN_VS_TRAY], models[ModelKind.SPLIT_VS_SEED_COAT])
    values = [analyze_image(pipe, read_image(Path(DATASET) / p)).bsr
              for p in os.environ["BEANSPLIT_RETORT_SERIES"].split(",")]
    assert np.all(np.diff(values) > 0), values
