"""PTC1 checkpoint files.

    b"PTC1" | u64 header length | JSON header | raw little-endian tensors

The header holds both configs and a tensor index (name, dtype, shape, offset,
length), offsets relative to the start of the payload. Nothing time-dependent
is written, so equal parameters give byte-identical files.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict
from typing import Optional, Union

import numpy as np

from ..errors import BadMagic, HeaderMismatch, OutputUnwritable
from .config import ModelConfig, TrainConfig, config_from_dict
from .encoder import Params

MAGIC = b"PTC1"
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def _dtype_tag(arr: np.ndarray) -> str:
    for tag, dt in DTYPES.items():
        if arr.dtype == dt:
            return tag
    raise ValueError(f"unsupported tensor dtype {arr.dtype}")


def save_checkpoint(path: Union[str, os.PathLike], params: Params, model_config: ModelConfig,
                    train_config: Optional[TrainConfig] = None) -> None:
    index, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        tag = _dtype_tag(arr)
        raw = arr.astype(DTYPES[tag], copy=False).tobytes(order="C")
        index.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                      "offset": offset, "length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "model_config": asdict(model_config),
        "train_config": asdict(train_config) if train_config is not None else None,
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<Q", len(hbytes)) + hbytes)
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise OutputUnwritable(str(exc)) from exc


def load_checkpoint(path: Union[str, os.PathLike]) -> tuple[Params, ModelConfig, Optional[TrainConfig]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a PTC1 checkpoint")
    if len(data) < 12:
        raise HeaderMismatch("file too short for header length")
    hlen, = struct.unpack_from("<Q", data, 4)
    if 12 + hlen > len(data):
        raise HeaderMismatch("header overruns file")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
        model_config = config_from_dict(ModelConfig, header["model_config"])
        tc = header.get("train_config")
        train_config = config_from_dict(TrainConfig, tc) if tc is not None else None
        index = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise HeaderMismatch(f"unreadable header: {exc}") from None

    payload = memoryview(data)[12 + hlen:]
    params: Params = {}
    end = 0
    for t in index:
        dt = DTYPES.get(t["dtype"])
        if dt is None:
            raise HeaderMismatch(f"unknown dtype {t['dtype']}")
        shape = tuple(t["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if n != t["length"] or t["offset"] < end:
            raise HeaderMismatch(f"tensor {t['name']}: shape/offset inconsistent")
        if t["offset"] + n > len(payload):
            raise HeaderMismatch(f"tensor {t['name']} truncated")
        arr = np.frombuffer(payload[t["offset"]:t["offset"] + n], dtype=dt).reshape(shape)
        params[t["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
        end = t["offset"] + n
    if end != len(payload):
        raise HeaderMismatch(f"payload has {len(payload) - end} trailing bytes")
    return params, model_config, train_config
