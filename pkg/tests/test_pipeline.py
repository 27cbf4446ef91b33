import numpy as np
import pytest

from beansplit.errors import DataError, NoBeanPixels
from beansplit.imagecore import LabelMask, PixelClass, RgbImage
from beansplit.measures import bsr, mask_bsh
from beansplit.pipeline import (
    Pipeline,
    PipelineConfig,
    analyze_image,
    read_scores,
    segment,
    write_scores,
)
from beansplit.segnet import ModelKind, NetworkConfig, NetworkWeights, save_weights

from conftest import random_mask

ORACLE_CFG = NetworkConfig(levels=1, channels=(1,), enc_convs=(0,), dec_convs=())


def channel_detector(kind, channel, gain=20.0):
    """A single centre-tap conv whose class-1 logit is gain * (x[channel] - 0.5)."""
    kernel = np.zeros((3, 3, 3, 2))
    kernel[1, 1, channel, 1] = gain
    bias = np.array([0.0, -gain / 2])
    return NetworkWeights(ORACLE_CFG, kind, {"out.kernel": kernel, "out.bias": bias})


def encode(mask):
    """Red marks bean pixels, green marks split pixels."""
    px = np.zeros(mask.labels.shape + (3,), np.uint8)
    px[..., 0] = np.where(mask.labels != PixelClass.TRAY, 255, 0)
    px[..., 1] = np.where(mask.labels == PixelClass.SPLIT, 255, 0)
    return RgbImage(px)


def oracle_pipeline(split_threshold=0.5, split_gain=20.0):
    cfg = PipelineConfig("bean.bswt", "split.bswt", split_threshold, max_split_area=30)
    return Pipeline(cfg, channel_detector(ModelKind.BEAN_VS_TRAY, 0),
                    channel_detector(ModelKind.SPLIT_VS_SEED_COAT, 1, split_gain))


def test_oracle_weights_reproduce_mask(rng):
    pipe = oracle_pipeline()
    for _ in range(5):
        mask = random_mask(rng, 13, 9)
        got, probs = segment(pipe, encode(mask))
        assert got == mask
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0)
        m = analyze_image(pipe, encode(mask), "x")
        assert m.bsr == bsr(mask)
        assert m.bsh == mask_bsh(mask, 30)[0]
        assert m.bean_px == m.split_px + m.seedcoat_px == mask.labels.size - mask.count(PixelClass.TRAY)
        assert abs(sum(m.bsh.bins) - m.bsr) <= 1e-9


def test_split_scores_below_threshold_give_zero(rng):
    mask = random_mask(rng, 10, 10)
    # the split logit saturates at 0.5 + tiny, below a 0.9 threshold
    m = analyze_image(oracle_pipeline(split_threshold=0.9, split_gain=1e-3), encode(mask))
    assert m.bsr == 0.0 and m.n_splits == 0 and sum(m.bsh.bins) == 0


def test_no_bean_pixels():
    mask = LabelMask(np.zeros((4, 4), np.uint8))
    with pytest.raises(NoBeanPixels):
        analyze_image(oracle_pipeline(), encode(mask))


def test_deterministic_and_traceable(tmp_path, rng):
    save_weights(tmp_path / "bean.bswt", channel_detector(ModelKind.BEAN_VS_TRAY, 0))
    save_weights(tmp_path / "split.bswt", channel_detector(ModelKind.SPLIT_VS_SEED_COAT, 1))
    (tmp_path / "pipe.json").write_text(
        '{"bean_weights": "bean.bswt", "split_weights": "split.bswt", '
        '"split_threshold": 0.5, "max_split_area": 30}')
    cfg = PipelineConfig.read(tmp_path / "pipe.json")
    image = encode(random_mask(rng, 8, 8))
    a, b = analyze_image(cfg, image, "s"), analyze_image(cfg, image, "s")
    assert a == b
    j = a.to_json()
    assert set(j) >= {"bsr", "bsh", "n_splits", "split_px", "bean_px", "M", "N", "threshold",
                      "weights_id", "config_hash"}
    other = PipelineConfig(**{**cfg.__dict__, "split_threshold": 0.6})
    assert Pipeline.load(other).config_hash != Pipeline.load(cfg).config_hash


def test_model_kinds_are_checked():
    bean = channel_detector(ModelKind.BEAN_VS_TRAY, 0)
    cfg = PipelineConfig("a", "b", 0.5, 10)
    with pytest.raises(DataError):
        Pipeline(cfg, bean, bean)


@pytest.mark.parametrize("kwargs", [
    {"split_threshold": 1.5}, {"bean_threshold": -0.1}, {"max_split_area": 0}, {"connectivity": 6},
])
def test_config_validation(kwargs):
    base = {"bean_weights": "a", "split_weights": "b", "split_threshold": 0.5, "max_split_area": 10}
    with pytest.raises(DataError):
        PipelineConfig(**{**base, **kwargs})


def test_scores_sidecar_roundtrip(tmp_path, rng):
    probs = rng.random((5, 4, 3)).astype(np.float32)
    write_scores(tmp_path / "x.scores", probs)
    np.testing.assert_array_equal(read_scores(tmp_path / "x.scores"), probs)
    assert (tmp_path / "x.scores").stat().st_size == 5 * 4 * 3 * 4
