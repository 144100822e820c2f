import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embalign.errors import DataError
from embalign.io import (
    Corpus,
    Record,
    decode_emb1,
    encode_emb1,
    read_corpus,
    read_emb1,
    read_labels,
    write_corpus,
    write_emb1,
    write_labels,
)

finite32 = st.floats(width=32, allow_nan=False, allow_infinity=False)


def test_header_layout():
    buf = encode_emb1(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    assert buf[:4] == b"EMB1"
    assert struct.unpack("<II", buf[4:12]) == (1, 3)
    assert buf[12] == 1
    assert buf[13:20] == bytes(7)
    assert np.frombuffer(buf[20:], "<f4").tolist() == [1.0, 2.0, 3.0]


@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(0, 6)), elements=finite32))
def test_roundtrip_bit_exact_float32(m):
    back = decode_emb1(encode_emb1(m), widen=False)
    assert back.dtype == np.float32 and back.shape == m.shape
    assert back.tobytes() == m.astype("<f4").tobytes()
    # widening is exact too
    assert np.array_equal(decode_emb1(encode_emb1(m)), m.astype(np.float64))


def test_roundtrip_float64(tmp_path, rng):
    m = rng.normal(size=(5, 4))
    p = tmp_path / "m.emb1"
    write_emb1(str(p), m, dtype=np.float64)
    assert read_emb1(str(p)).tobytes() == m.tobytes()


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda b: b"EMB2" + b[4:], "magic"),
        (lambda b: b[:12] + bytes([9]) + b[13:], "dtype"),
        (lambda b: b[:13] + b"\x01" + b[14:], "reserved"),
        (lambda b: b[:-1], "size"),
        (lambda b: b[:10], "header"),
    ],
)
def test_corrupt_files_rejected(mutate, msg):
    buf = encode_emb1(np.ones((2, 2)))
    with pytest.raises(DataError, match=msg):
        decode_emb1(mutate(buf))


def test_non_finite_not_written():
    with pytest.raises(DataError):
        encode_emb1(np.array([[np.inf]]))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing"):
        read_emb1(str(tmp_path / "nope.emb1"))


def test_corpus_roundtrip(tmp_path):
    c = Corpus([Record("a", "Hallo Welt", "de"), Record("b", "hello", "en")])
    p = str(tmp_path / "c.jsonl")
    write_corpus(p, c)
    back = read_corpus(p)
    assert back.records == c.records


def test_corpus_invariants():
    with pytest.raises(DataError, match="duplicate"):
        Corpus([Record("a", "x"), Record("a", "y")])
    with pytest.raises(DataError, match="empty"):
        Corpus([Record("a", "")])


def test_corpus_bad_line(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "a", "text": "ok"}\n{"id": "b"}\n')
    with pytest.raises(DataError, match=":2:"):
        read_corpus(str(p))


def test_labels_roundtrip(tmp_path):
    p = str(tmp_path / "l.jsonl")
    write_labels(p, ["x", "y"], [1, 0])
    ids, labels = read_labels(p)
    assert ids == ["x", "y"] and labels.tolist() == [1, 0]
