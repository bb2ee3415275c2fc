"""File formats: canonical JSON-lines records, the raw tensor container, PNG frames.

Every JSON record carries ``schema_version``. Records are written with
sorted keys and no extra whitespace so identical content gives identical
bytes.

Tensor container layout (little-endian)::

    8 bytes   magic  b"HFTENSR\\0"
    uint32    container version (1)
    4 bytes   numpy dtype string, space padded (b"|u1 ", b"<f4 ", b"<f8 ")
    uint32    ndim
    uint64    extent, repeated ndim times
    ...       C-order element data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TENSOR_MAGIC = b"HFTENSR\0"
TENSOR_VERSION = 1
_DTYPES = {"|u1": np.uint8, "<f4": np.float32, "<f8": np.float64}


class SchemaError(ValueError):
    pass


def dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            rec = {"schema_version": SCHEMA_VERSION, **rec}
            fh.write(dumps(rec) + "\n")


def read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            version = rec.get("schema_version", SCHEMA_VERSION)
            if version != SCHEMA_VERSION:
                raise SchemaError(f"{path}:{lineno}: unsupported schema_version {version}")
            out.append(rec)
    return out


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_tensor(path, array):
    arr = np.ascontiguousarray(array)
    code = arr.dtype.str
    if code not in _DTYPES:
        raise SchemaError(f"unsupported tensor dtype {arr.dtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", TENSOR_VERSION))
        fh.write(code.encode("ascii").ljust(4))
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path):
    with open(path, "rb") as fh:
        if fh.read(8) != TENSOR_MAGIC:
            raise SchemaError(f"{path}: not a tensor container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != TENSOR_VERSION:
            raise SchemaError(f"{path}: unsupported container version {version}")
        code = fh.read(4).decode("ascii").strip()
        if code not in _DTYPES:
            raise SchemaError(f"{path}: unsupported dtype {code!r}")
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.dtype(code))
    if data.size != int(np.prod(shape)):
        raise SchemaError(f"{path}: payload size does not match shape {shape}")
    return data.reshape(shape)


def load_frames(path):
    """Frames as float64 (N, 3, H, W) in [0, 1] from a container or a directory of PNGs."""
    path = Path(path)
    if path.is_dir():
        from PIL import Image

        files = sorted(path.glob("*.png"))
        if not files:
            raise FileNotFoundError(f"no PNG frames in {path}")
        arrs = [np.asarray(Image.open(f).convert("RGB"), dtype=np.uint8) for f in files]
        data = np.stack(arrs).transpose(0, 3, 1, 2)
    else:
        data = read_tensor(path)
    if data.ndim != 4 or data.shape[1] != 3:
        raise SchemaError(f"{path}: frames must be (N, 3, H, W), got {data.shape}")
    if data.dtype == np.uint8:
        return data.astype(np.float64) / 255.0
    return data.astype(np.float64)


def save_png_frames(directory, frames):
    """Write (N, 3, H, W) frames in [0, 1] as zero-padded PNG files."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    u8 = np.clip(np.round(np.asarray(frames) * 255.0), 0, 255).astype(np.uint8)
    for i, f in enumerate(u8):
        Image.fromarray(f.transpose(1, 2, 0)).save(directory / f"{i:06d}.png")


def array_entry(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "values": arr.reshape(-1).tolist()}


def entry_array(entry):
    shape = tuple(entry["shape"])
    values = np.asarray(entry["values"], dtype=np.float64)
    if values.size != int(np.prod(shape)):
        raise SchemaError(f"entry with shape {shape} has {values.size} values")
    return values.reshape(shape)
