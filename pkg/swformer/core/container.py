"""
Tensor container files: a JSON header followed by a little-endian raw blob.

Layout:
    b"SWFT"                magic
    uint32 (LE)            header length in bytes
    header                 UTF-8 JSON {"shape": [...], "dtype": "f32"|"i8", "polarity": ...}
    blob                   product(shape) values, little-endian

Ternary spikes are stored as int8 with their polarity; dense tensors as f32.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from swformer.core.spike_core import SpikeTensor
from swformer.errors import FormatError
from swformer.models import Polarity

logger = logging.getLogger(__name__)

MAGIC = b"SWFT"
_NUMPY_DTYPES = {"f32": np.dtype("<f4"), "i8": np.dtype("i1")}


def encode_tensor(x: Union[torch.Tensor, SpikeTensor], dtype: Optional[str] = None) -> bytes:
    """Serialize a dense tensor (f32 by default) or a SpikeTensor (i8)."""
    if isinstance(x, SpikeTensor):
        values = x.values
        dtype = "i8"
        polarity: Optional[str] = x.polarity.value
    else:
        values = x.detach()
        dtype = dtype or ("i8" if values.dtype == torch.int8 else "f32")
        polarity = None
    if dtype not in _NUMPY_DTYPES:
        raise FormatError(f"unsupported container dtype {dtype!r}")

    array = values.cpu().numpy().astype(_NUMPY_DTYPES[dtype], copy=False)
    header = json.dumps(
        {"shape": list(values.shape), "dtype": dtype, "polarity": polarity},
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + array.tobytes(order="C")


def decode_tensor(payload: bytes) -> Union[torch.Tensor, SpikeTensor]:
    if payload[:4] != MAGIC:
        raise FormatError("bad container magic", offset=0)
    if len(payload) < 8:
        raise FormatError("truncated container header", offset=4)
    (header_len,) = struct.unpack("<I", payload[4:8])
    header_end = 8 + header_len
    if len(payload) < header_end:
        raise FormatError("truncated container header", offset=8)
    try:
        header: Dict[str, Any] = json.loads(payload[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable container header: {e}", offset=8) from e

    dtype = header.get("dtype")
    if dtype not in _NUMPY_DTYPES:
        raise FormatError(f"unsupported container dtype {dtype!r}", offset=8)
    shape = [int(s) for s in header.get("shape", [])]
    count = int(np.prod(shape)) if shape else 1
    np_dtype = _NUMPY_DTYPES[dtype]
    expected = count * np_dtype.itemsize
    blob = payload[header_end:]
    if len(blob) != expected:
        raise FormatError(
            f"blob holds {len(blob)} bytes, header promises {expected}", offset=header_end
        )

    if count == 0:
        array = np.zeros(shape, dtype=np_dtype)
    else:
        array = np.frombuffer(blob, dtype=np_dtype, count=count).reshape(shape)
    if dtype == "f32":
        return torch.from_numpy(array.astype(np.float32))
    values = torch.from_numpy(array.astype(np.int8))
    polarity = header.get("polarity")
    if polarity is None:
        return values
    return SpikeTensor(values, Polarity(polarity))


def save_tensor(path: Path, x: Union[torch.Tensor, SpikeTensor], dtype: Optional[str] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(x, dtype=dtype))


def load_tensor(path: Path) -> Union[torch.Tensor, SpikeTensor]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Tensor container not found: {path}")
    return decode_tensor(path.read_bytes())
