"""Binary checkpoint persistence: named tensors, little-endian, bit-exact.

Layout (all integers little-endian):

    magic "WFE1" | u32 version
    config echo: u32 D, H, src_vocab, tgt_vocab, layers
                 f64 dropout, epsilon | u32 hinge exponent | f64 c1, c2
    u32 entry count, then per entry (sorted by name):
        u32 name length | name utf-8 | u8 dtype (0=f64, 1=f32)
        u8 rank | u32 dims[rank] | row-major payload

Float64 round trips are exact; the f32 path exists only behind an explicit
downcast flag and is lossy by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .model import ModelConfig, param_shapes
from .tensor import Tensor
from .wfe import WfeLossConfig, PARAM_NAMES as WFE_PARAM_NAMES
from . import wfe as _wfe

MAGIC = b"WFE1"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


class CheckpointFormatError(ValueError):
    """Malformed checkpoint file; message carries the byte offset."""


class CheckpointShapeError(ValueError):
    """Checkpoint tensors do not fit the expected model configuration."""


@dataclass
class Checkpoint:
    model_cfg: ModelConfig
    loss_cfg: WfeLossConfig
    params: Dict[str, Tensor]

    @property
    def has_wfe(self) -> bool:
        return all(name in self.params for name in WFE_PARAM_NAMES)


def save(path, params: Dict[str, Tensor], model_cfg: ModelConfig,
         loss_cfg: Optional[WfeLossConfig] = None,
         single_precision: bool = False) -> None:
    """Write all parameters; entry order is sorted by name for canonical bytes."""
    loss_cfg = loss_cfg or WfeLossConfig()
    dtype_code = 1 if single_precision else 0
    dtype = _DTYPES[dtype_code]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<5I", model_cfg.D, model_cfg.H,
                             model_cfg.src_vocab_size, model_cfg.tgt_vocab_size,
                             model_cfg.layers))
        fh.write(struct.pack("<dd", model_cfg.dropout_rate, loss_cfg.epsilon))
        fh.write(struct.pack("<I", loss_cfg.b))
        fh.write(struct.pack("<dd", loss_cfg.c1, loss_cfg.c2))
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name].data
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", dtype_code, data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype=dtype).tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise CheckpointFormatError(
                f"truncated while reading {what} at byte offset {self.offset}")
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load(path, expect_model_cfg: Optional[ModelConfig] = None) -> Checkpoint:
    """Read a checkpoint; optionally validate shapes against a configuration.

    With ``expect_model_cfg`` the first tensor whose stored shape disagrees
    with the expected parameter map is reported by name.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(
            f"bad magic {magic!r} at byte offset 0; not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointFormatError(
            f"unsupported format version {version} at byte offset 4")
    d, h, src_v, tgt_v, layers = r.unpack("<5I", "model config")
    dropout, epsilon = r.unpack("<dd", "loss config")
    (b_exp,) = r.unpack("<I", "loss config")
    c1, c2 = r.unpack("<dd", "loss config")
    try:
        model_cfg = ModelConfig(D=d, H=h, src_vocab_size=src_v, tgt_vocab_size=tgt_v,
                                layers=layers, dropout_rate=dropout)
        loss_cfg = WfeLossConfig(epsilon=epsilon, b=b_exp, c1=c1, c2=c2)
    except ValueError as err:
        raise CheckpointFormatError(
            f"invalid config block before byte offset {r.offset}: {err}") from err
    (count,) = r.unpack("<I", "entry count")

    params: Dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I", "entry name length")
        name = r.take(name_len, "entry name").decode("utf-8")
        if name in params:
            raise CheckpointFormatError(
                f"duplicate entry '{name}' at byte offset {r.offset}")
        dtype_code, rank = r.unpack("<BB", f"dtype/rank of '{name}'")
        if dtype_code not in _DTYPES:
            raise CheckpointFormatError(
                f"unknown dtype code {dtype_code} for '{name}' "
                f"at byte offset {r.offset - 2}")
        dims: Tuple[int, ...] = r.unpack(f"<{rank}I", f"dims of '{name}'")
        n_bytes = int(np.prod(dims, dtype=np.int64)) * _DTYPES[dtype_code].itemsize
        payload = r.take(n_bytes, f"payload of '{name}'")
        arr = np.frombuffer(payload, dtype=_DTYPES[dtype_code]).reshape(dims)
        params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    if r.offset != len(blob):
        raise CheckpointFormatError(
            f"{len(blob) - r.offset} trailing bytes at byte offset {r.offset}")

    if expect_model_cfg is not None:
        expected = dict(param_shapes(expect_model_cfg))
        expected.update(_wfe.param_shapes(expect_model_cfg.H,
                                          expect_model_cfg.tgt_vocab_size))
        for name in sorted(params):
            if name in expected and params[name].data.shape != expected[name]:
                raise CheckpointShapeError(
                    f"tensor '{name}' has shape {params[name].data.shape}, "
                    f"expected {expected[name]}")

    return Checkpoint(model_cfg=model_cfg, loss_cfg=loss_cfg, params=params)
