"""Pyramid encoder/decoder segmentation network.

Encoder: at each of ``levels`` resolutions a stack of conv+ReLU layers,
max-pooling between levels.  Decoder: from the coarsest level upward,
nearest-neighbour upsample, concatenate with the encoder activations of
the same resolution, then conv+ReLU.  A final 3x3 conv (no ReLU) emits
one logit per class.

Parameter canonical order: ``enc{l}.{j}`` for levels l = 0..L-1 and
convs j; then ``dec{l}.{j}`` for l = L-2 down to 0; then ``out``.
Each conv contributes its kernel ``(3, 3, cin, cout)`` followed by its
bias ``(cout,)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..errors import DimensionMismatch, DimensionNotDivisible, EmptyLoss, ShapeMismatch
from ..imagecore import RgbImage, ScoreMap
from . import layers


class ModelKind(str, Enum):
    BEAN_VS_TRAY = "BeanVsTray"
    SPLIT_VS_SEED_COAT = "SplitVsSeedCoat"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        aliases = {"bean": cls.BEAN_VS_TRAY, "split": cls.SPLIT_VS_SEED_COAT}
        if text in aliases:
            return aliases[text]
        return cls(text)


@dataclass(frozen=True)
class NetworkConfig:
    levels: int = 6
    channels: tuple[int, ...] = (16, 32, 64, 64, 64, 64)
    enc_convs: tuple[int, ...] = (2, 2, 2, 2, 2, 2)
    dec_convs: tuple[int, ...] = (1, 1, 1, 1, 1)  # decoder levels 0..L-2
    classes: int = 2
    input_mean: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("channels", "enc_convs", "dec_convs", "input_mean"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if len(self.channels) != self.levels or min(self.channels) < 1:
            raise ValueError(f"need {self.levels} channel widths >= 1, got {self.channels}")
        if len(self.enc_convs) != self.levels or min(self.enc_convs) < 0:
            raise ValueError(f"need {self.levels} encoder conv counts >= 0")
        if len(self.dec_convs) != self.levels - 1 or (self.dec_convs and min(self.dec_convs) < 1):
            raise ValueError(f"need {self.levels - 1} decoder conv counts >= 1")
        if self.classes < 1:
            raise ValueError("classes must be >= 1")
        if len(self.input_mean) != 3:
            raise ValueError("input_mean needs 3 entries")

    @property
    def divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        """Build from JSON; scalar conv counts broadcast over levels."""
        d = dict(d)
        levels = int(d.get("levels", cls.levels))
        d["levels"] = levels
        if "convs_per_stage" in d:
            cps = d.pop("convs_per_stage")
            if isinstance(cps, dict):
                d.setdefault("enc_convs", cps.get("encoder", 2))
                d.setdefault("dec_convs", cps.get("decoder", 1))
        for key, n, default in (("enc_convs", levels, 2), ("dec_convs", levels - 1, 1)):
            v = d.get(key, default)
            d[key] = (int(v),) * n if isinstance(v, int) else tuple(v)
        if "channels" not in d and levels != cls.levels:
            raise ValueError("channels must be given when levels differs from the default")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)

    def conv_specs(self) -> list[tuple[str, int, int, int]]:
        """``(name, cin, cout, stride)`` for every conv in canonical order."""
        specs = []
        cin = 3
        skip_ch = []
        for lvl in range(self.levels):
            for j in range(self.enc_convs[lvl]):
                specs.append((f"enc{lvl}.{j}", cin, self.channels[lvl], 2 ** lvl))
                cin = self.channels[lvl]
            skip_ch.append(cin)
        for lvl in range(self.levels - 2, -1, -1):
            cin += skip_ch[lvl]
            for j in range(self.dec_convs[lvl]):
                specs.append((f"dec{lvl}.{j}", cin, self.channels[lvl], 2 ** lvl))
                cin = self.channels[lvl]
        specs.append(("out", cin, self.classes, 1))
        return specs


def receptive_field(config: NetworkConfig) -> int:
    """1 + sum over 3x3 convs of 2 * (stride of the level it runs at).

    Pooling windows are not counted.
    """
    return 1 + sum(2 * stride for _, _, _, stride in config.conv_specs())


@dataclass
class NetworkWeights:
    config: NetworkConfig
    kind: ModelKind
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.param_shapes(self.config)
        if list(self.params) != list(expected):
            raise ShapeMismatch("parameter names/order do not match the config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {self.params[name].shape} != {shape}")

    @staticmethod
    def param_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for name, cin, cout, _ in config.conv_specs():
            shapes[f"{name}.kernel"] = (3, 3, cin, cout)
            shapes[f"{name}.bias"] = (cout,)
        return shapes

    @classmethod
    def zeros(cls, config: NetworkConfig, kind: ModelKind, dtype=np.float64) -> "NetworkWeights":
        return cls(config, kind, {n: np.zeros(s, dtype) for n, s in cls.param_shapes(config).items()})

    @classmethod
    def initialize(cls, config: NetworkConfig, kind: ModelKind, seed: int,
                   dtype=np.float64) -> "NetworkWeights":
        """Kernels uniform in +-1/sqrt(fan_in), biases zero."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.param_shapes(config).items():
            if name.endswith(".kernel"):
                bound = 1.0 / np.sqrt(9 * shape[2])
                params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype)
        return cls(config, kind, params)

    def astype(self, dtype) -> "NetworkWeights":
        return NetworkWeights(self.config, self.kind,
                              {k: v.astype(dtype) for k, v in self.params.items()})

    def with_config(self, config: NetworkConfig) -> "NetworkWeights":
        return NetworkWeights(config, self.kind, self.params)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def normalize_input(config: NetworkConfig, pixels: np.ndarray, dtype=np.float64) -> np.ndarray:
    x = pixels.astype(dtype) / dtype(255.0)
    return x - np.asarray(config.input_mean, dtype=dtype)


def forward(weights: NetworkWeights, x: np.ndarray):
    """Run the network on a normalized ``(h, w, 3)`` array.

    Returns ``(logits, cache)``; the cache feeds :func:`backward`.
    """
    cfg = weights.config
    p = weights.params
    h, w = x.shape[:2]
    if h % cfg.divisor or w % cfg.divisor:
        raise DimensionNotDivisible(f"{h}x{w} not divisible by {cfg.divisor}; pad the image first")
    tape = []

    def conv(name, a, relu=True):
        y, c = layers.conv3x3_forward(a, p[f"{name}.kernel"], p[f"{name}.bias"])
        act = None
        if relu:
            y, act = layers.relu_forward(y)
        tape.append(("conv", name, c, act))
        return y

    skips = []
    a = x
    for lvl in range(cfg.levels):
        if lvl > 0:
            a, arg = layers.maxpool2(a)
            tape.append(("pool", lvl, arg, None))
        for j in range(cfg.enc_convs[lvl]):
            a = conv(f"enc{lvl}.{j}", a)
        tape.append(("skip", lvl, None, None))
        skips.append(a)
    for lvl in range(cfg.levels - 2, -1, -1):
        a = layers.upsample_nn2(a)
        tape.append(("up", lvl, a.shape[2], None))
        a = np.concatenate([a, skips[lvl]], axis=2)
        for j in range(cfg.dec_convs[lvl]):
            a = conv(f"dec{lvl}.{j}", a)
    logits = conv("out", a, relu=False)
    return logits, tape


def backward(weights: NetworkWeights, dlogits: np.ndarray, tape, need_input_grad: bool = False):
    """Backpropagate ``dlogits`` through a recorded forward pass.

    Returns ``(param_grads, input_grad)``; the input gradient is None
    unless requested.
    """
    grads = {}
    skip_grads: dict[int, np.ndarray] = {}
    da = dlogits
    first = next((key for op, key, _, _ in tape if op == "conv"), None)
    for op, key, cache, extra in reversed(tape):
        if op == "conv":
            if extra is not None:
                da = layers.relu_backward(da, extra)
            in_grad = need_input_grad or key != first
            da, dk, db = layers.conv3x3_backward(da, cache, in_grad)
            grads[f"{key}.kernel"] = dk
            grads[f"{key}.bias"] = db
            if da is None:
                break  # nothing before the first conv has parameters
        elif op == "skip":
            # this level's encoder output also fed the decoder merge
            if key in skip_grads:
                da = da + skip_grads.pop(key)
        elif op == "up":
            skip_grads[key] = da[:, :, cache:]
            da = layers.upsample_nn2_backward(da[:, :, :cache])
        elif op == "pool":
            da = layers.maxpool2_backward(da, cache)
    return {k: grads[k] for k in weights.params}, da


def pyramid_forward(weights: NetworkWeights, image: RgbImage, dtype=np.float64) -> ScoreMap:
    x = normalize_input(weights.config, image.pixels, dtype)
    logits, _ = forward(weights, x)
    return ScoreMap(logits)


def masked_cross_entropy(logits: np.ndarray, targets: np.ndarray, valid: np.ndarray):
    """Mean softmax cross-entropy over ``valid`` pixels.

    ``targets`` holds class indices per pixel (ignored where ``valid`` is
    False).  Returns ``(loss, dlogits)``; the gradient is zero at ignored
    pixels.
    """
    if logits.shape[:2] != targets.shape or targets.shape != valid.shape:
        raise DimensionMismatch("logits, targets and valid mask must share height/width")
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise EmptyLoss("every pixel is ignored")
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsum
    t = np.where(valid, targets, 0).astype(np.intp)
    picked = np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]
    loss = -picked[valid].sum() / n
    grad = np.exp(logp)
    np.put_along_axis(grad, t[..., None], np.take_along_axis(grad, t[..., None], axis=-1) - 1.0,
                      axis=-1)
    grad *= (valid / n)[..., None]
    return float(loss), grad
