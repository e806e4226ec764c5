"""Binary model file.

Layout, all little-endian::

    magic        4s   b"SWPM"
    version      u16  1
    beta         f64
    prior_mean   f64
    prior_var    f64
    observations u64
    n_features   u64
    n_features x (feature_id u64, mean f64, variance f64), sorted by feature_id

Floats are stored as raw IEEE-754 doubles, so a round trip is bit-exact.
"""

import struct

import numpy as np

from ..errors import ConfigError, FormatError
from .model import GaussianBelief, ModelConfig, ModelState

MAGIC = b"SWPM"
VERSION = 1
_HEADER = struct.Struct("<4sHdddQQ")
_RECORD = np.dtype([("id", "<u8"), ("mean", "<f8"), ("variance", "<f8")])


def serialize_model(state: ModelState) -> bytes:
    cfg = state.config
    ids = sorted(state.weights)
    table = np.empty(len(ids), dtype=_RECORD)
    table["id"] = ids
    table["mean"] = [state.weights[i].mean for i in ids]
    table["variance"] = [state.weights[i].variance for i in ids]
    header = _HEADER.pack(
        MAGIC, VERSION, cfg.beta, cfg.prior_mean, cfg.prior_variance,
        state.observations_seen, len(ids),
    )
    return header + table.tobytes()


def deserialize_model(data: bytes) -> ModelState:
    if len(data) < _HEADER.size:
        raise FormatError("model file truncated in header")
    magic, version, beta, m0, v0, seen, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"not a model file (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    expected = _HEADER.size + n * _RECORD.itemsize
    if len(data) != expected:
        raise FormatError(f"model file has {len(data)} bytes, expected {expected}")
    table = np.frombuffer(data, dtype=_RECORD, count=n, offset=_HEADER.size)
    ids = table["id"]
    if np.any(ids[1:] <= ids[:-1]) or np.any(~(table["variance"] > 0)):
        raise FormatError("model records unsorted or with non-positive variance")
    weights = {
        int(i): GaussianBelief(float(m), float(s))
        for i, m, s in zip(ids.tolist(), table["mean"].tolist(), table["variance"].tolist())
    }
    try:
        config = ModelConfig(beta, m0, v0)
    except ConfigError as exc:
        raise FormatError(f"invalid hyperparameters in model file: {exc}") from exc
    return ModelState(config, weights, seen)


def save_model(state: ModelState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(state))


def load_model(path) -> ModelState:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
