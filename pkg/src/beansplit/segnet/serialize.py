"""BSWT weight files.

Layout: ``b"BSWT"``, uint32 version, uint32 header length, UTF-8 JSON
header (config, model_kind, receptive_field), then every parameter as
little-endian float32 in canonical order.  All integers little-endian.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..errors import BadMagic, LengthMismatch, UnsupportedVersion, WeightFileError
from .network import ModelKind, NetworkConfig, NetworkWeights, receptive_field

MAGIC = b"BSWT"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def serialize_weights(weights: NetworkWeights) -> bytes:
    header = {
        "config": weights.config.to_dict(),
        "model_kind": weights.kind.value,
        "receptive_field": receptive_field(weights.config),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in weights.params.values())
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def deserialize_weights(data: bytes) -> NetworkWeights:
    """Parse a BSWT file; parameters come back as float64."""
    if len(data) < _PREFIX.size:
        raise BadMagic("file too short for a BSWT header")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"weight format version {version} (supported: {VERSION})")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise LengthMismatch("header truncated")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        config = NetworkConfig.from_dict(header["config"])
        kind = ModelKind(header["model_kind"])
    except (ValueError, KeyError, TypeError) as exc:
        raise WeightFileError(f"invalid weight header: {exc}") from exc
    shapes = NetworkWeights.param_shapes(config)
    n = sum(int(np.prod(s)) for s in shapes.values())
    body = data[start + hlen:]
    if len(body) != 4 * n:
        raise LengthMismatch(f"expected {4 * n} parameter bytes for this config, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f4").astype(np.float64)
    params = {}
    off = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = flat[off:off + size].reshape(shape)
        off += size
    return NetworkWeights(config, kind, params)


def save_weights(path, weights: NetworkWeights) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_weights(weights))


def load_weights(path) -> NetworkWeights:
    with open(path, "rb") as fh:
        return deserialize_weights(fh.read())


def weights_id(weights: NetworkWeights) -> str:
    return hashlib.sha256(serialize_weights(weights)).hexdigest()[:12]
