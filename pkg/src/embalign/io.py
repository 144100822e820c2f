"""File formats: EMB1 binary matrices, JSONL corpora and label files.

EMB1 layout (little endian)::

    b"EMB1" | u32 rows | u32 cols | u8 dtype | 7 zero bytes | row-major payload

dtype 1 is float32.  dtype 2 (float64) is used for fitted maps and model
parameters where narrowing would lose precision.  Readers always return float64.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIIB7s")
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


def encode_emb1(matrix, dtype=np.float32):
    dt = np.dtype(dtype).newbyteorder("<")
    if dt not in _TAGS:
        raise DataError(f"EMB1 supports float32/float64, not {dtype}")
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise DataError(f"EMB1 stores 2-d matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("refusing to write non-finite values")
    rows, cols = arr.shape
    header = _HEADER.pack(MAGIC, rows, cols, _TAGS[dt], bytes(7))
    return header + np.ascontiguousarray(arr, dtype=dt).tobytes()


def decode_emb1(buf, widen=True):
    if len(buf) < _HEADER.size:
        raise DataError("truncated EMB1 header")
    magic, rows, cols, tag, reserved = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DataError(f"bad EMB1 magic {magic!r}")
    if tag not in DTYPES:
        raise DataError(f"unknown EMB1 dtype tag {tag}")
    if reserved != bytes(7):
        raise DataError("EMB1 reserved bytes must be zero")
    dt = DTYPES[tag]
    expected = _HEADER.size + rows * cols * dt.itemsize
    if len(buf) != expected:
        raise DataError(f"EMB1 payload size {len(buf)} != expected {expected}")
    arr = np.frombuffer(buf, dtype=dt, offset=_HEADER.size).reshape(rows, cols)
    return arr.astype(np.float64) if widen else arr.copy()


def write_emb1(path, matrix, dtype=np.float32):
    data = encode_emb1(matrix, dtype)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_emb1(path, widen=True):
    try:
        with open(path, "rb") as fh:
            return decode_emb1(fh.read(), widen)
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc


# -- corpus ------------------------------------------------------------------


@dataclass(frozen=True)
class Record:
    id: str
    text: str
    lang: str = "en"


class Corpus:
    """Ordered records with unique ids and non-empty texts."""

    def __init__(self, records):
        self.records = tuple(records)
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DataError(f"duplicate corpus id {r.id!r}")
            if not r.text:
                raise DataError(f"record {r.id!r} has empty text")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Corpus(self.records[i])
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self):
        return [r.id for r in self.records]

    @property
    def texts(self):
        return [r.text for r in self.records]

    def take(self, indices):
        return Corpus([self.records[i] for i in indices])

    @classmethod
    def from_texts(cls, texts, lang="en", prefix=""):
        return cls(Record(f"{prefix}{i}", t, lang) for i, t in enumerate(texts))


def read_corpus(path):
    records = []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append(Record(str(rec["id"]), rec["text"], rec.get("lang", "en")))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad corpus record ({exc})") from exc
    return Corpus(records)


def write_corpus(path, corpus):
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus:
            fh.write(json.dumps({"id": r.id, "text": r.text, "lang": r.lang}, ensure_ascii=False) + "\n")


def read_labels(path):
    """Read ``{"id", "label"}`` lines; returns ``(ids, labels)``."""
    ids, labels = [], []
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(str(rec["id"]))
                labels.append(int(rec["label"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad label record ({exc})") from exc
    return ids, np.asarray(labels, dtype=np.int64)


def write_labels(path, ids, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for i, y in zip(ids, labels):
            fh.write(json.dumps({"id": str(i), "label": int(y)}) + "\n")
