"""``MFM1`` model container.

Layout (little-endian)::

    b"MFM1"  uint32 version
    uint64 metadata length, metadata JSON (config, vocabulary, category table)
    uint32 array count
    per array: uint16 name length, name, uint8 ndim, uint32 dims..., float32 data
    32-byte SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..errors import ChecksumError, ModelFormatError, VersionMismatchError
from ..tagset import CategoryTable
from .tagger import ModelConfig, TaggerModel
from .vocab import Vocabulary

MAGIC = b"MFM1"
VERSION = 1
DIGEST = 32


def _table_json(table: CategoryTable) -> dict:
    return {"exact": table.exact, "prefixes": table.prefixes, "categories": table.categories}


def _table_from_json(data: dict) -> CategoryTable:
    table = CategoryTable()
    for value, cat in data["exact"].items():
        table.add(value, cat)
    for prefix, cat in data["prefixes"]:
        table.add(prefix + "*", cat)
    table.categories = list(data["categories"])
    return table


def dumps(model: TaggerModel, extra: dict | None = None) -> bytes:
    meta = {"config": model.config.to_dict(), "vocab": model.vocab.to_json(),
            "table": _table_json(model.table), "extra": extra or {}}
    meta_bytes = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(meta_bytes)), meta_bytes,
           struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim)
                   + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    body = b"".join(out)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> TaggerModel:
    model, _ = loads_with_extra(data)
    return model


def loads_with_extra(data: bytes):
    if data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if len(data) < 8 + DIGEST:
        raise ChecksumError("model file truncated")
    body, digest = data[:-DIGEST], data[-DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("model checksum mismatch (file corrupt or truncated)")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise VersionMismatchError(f"model version {version}, this build reads {VERSION}")
    pos = 8
    (meta_len,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    meta = json.loads(body[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        params[name] = arr.astype(np.float64)
    if pos != len(body):
        raise ModelFormatError("trailing bytes in model file")
    config = ModelConfig.from_dict(meta["config"])
    model = TaggerModel(config, Vocabulary.from_json(meta["vocab"]), params,
                        _table_from_json(meta["table"]))
    expected = model.param_shapes()
    for name, shape in expected.items():
        if name not in params or params[name].shape != tuple(shape):
            raise ModelFormatError(f"parameter {name} missing or misshaped")
    return model, meta.get("extra", {})


def save_model(model: TaggerModel, path, extra: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(model, extra))


def load_model(path) -> TaggerModel:
    with open(path, "rb") as f:
        return loads(f.read())
