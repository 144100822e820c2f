import json
import os
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from embalign.errors import DataError
from embalign.metrics import (
    EntityAnnotation,
    bleu_n,
    cosine,
    entity_f1,
    lcs_length,
    read_entities_jsonl,
    rouge_1,
    rouge_l,
    tokenize,
)

from .oracles.text_metrics import lcs_bruteforce

GOLDEN = os.path.join(os.path.dirname(__file__), "fixtures", "metric_golden.json")
with open(GOLDEN) as fh:
    GOLDEN_CASES = json.load(fh)


def test_tokenize():
    assert tokenize("Hello, World!  (it's) -- fine.") == ["hello", "world", "it's", "fine"]
    assert tokenize("Ünïcode　spaces\ttoo") == ["ünïcode", "spaces", "too"]
    assert tokenize("Keep CASE", lowercase=False) == ["Keep", "CASE"]
    assert tokenize("a, b", strip_punct=False) == ["a,", "b"]


@pytest.mark.parametrize("case", GOLDEN_CASES, ids=lambda c: f"{c['reference']}|{c['candidate']}")
def test_golden(case):
    ref, cand = case["reference"], case["candidate"]
    assert lcs_length(ref, cand) == case["lcs"]
    for name, fn in (("rouge_l", rouge_l), ("rouge_1", rouge_1)):
        assert fn(ref, cand) == pytest.approx(case[name], abs=1e-6)
    assert bleu_n(ref, cand, 1) == pytest.approx(case["bleu_1"], abs=1e-6)
    assert bleu_n(ref, cand, 2) == pytest.approx(case["bleu_2"], abs=1e-6)


def test_rouge_l_derived_example():
    p, r, b2 = 2 / 3, 2 / 6, 1.2**2
    expected = 100 * (1 + b2) * p * r / (r + b2 * p)
    assert rouge_l("the cat sat on the mat", "the cat ran") == pytest.approx(expected, abs=1e-12)


def test_rouge_1_derived_example():
    assert rouge_1("a b b", "b b c") == pytest.approx(200 / 3, abs=1e-9)


def test_bleu_brevity_example():
    assert bleu_n("a b c d", "a b c", 1) == pytest.approx(100 * np.exp(1 - 4 / 3), abs=1e-9)
    assert round(bleu_n("a b c d", "a b c", 1), 2) == 71.65


@pytest.mark.parametrize("fn", [rouge_l, rouge_1, lambda r, c: bleu_n(r, c, 1), lambda r, c: bleu_n(r, c, 2)])
def test_identity_and_disjoint(fn):
    assert fn("one two three", "one two three") == 100.0
    assert fn("one two three", "four five six") == 0.0


def test_empty_sequences():
    for fn in (rouge_l, rouge_1):
        assert fn("", "a") == 0.0 and fn("a", "") == 0.0
    assert bleu_n("a b", "a", 2) == 0.0
    assert bleu_n("", "", 1) == 0.0


def test_bleu_order_validation():
    with pytest.raises(DataError):
        bleu_n("a", "a", 3)


def test_token_list_input_skips_tokenizer():
    assert rouge_1(["A", "b"], ["a", "b"]) == pytest.approx(50.0)
    with pytest.raises(DataError):
        rouge_1(["a", ""], ["a"])


words = st.lists(st.sampled_from(list("abcdef")), max_size=8)


@given(words, words)
def test_lcs_matches_bruteforce(a, b):
    assert lcs_length(a, b) == lcs_bruteforce(a, b) if a and b else lcs_length(a, b) == 0


def test_lcs_bounded_by_unigram_overlap():
    gen = np.random.default_rng(0)
    vocab = list("abcdefghij")
    for _ in range(1000):
        a = list(gen.choice(vocab, size=gen.integers(0, 15)))
        b = list(gen.choice(vocab, size=gen.integers(0, 15)))
        overlap = sum((Counter(a) & Counter(b)).values())
        assert lcs_length(a, b) <= overlap


@given(words, words)
def test_scores_bounded(a, b):
    for s in (rouge_l(a, b), rouge_1(a, b), bleu_n(a, b, 1), bleu_n(a, b, 2)):
        assert 0.0 <= s <= 100.0 + 1e-9


def test_cosine_examples():
    v = np.array([0.3, -2.0, 5.0])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-15)
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 2], [2, 1]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(DataError):
        cosine([0, 0], [1, 0])
    with pytest.raises(DataError):
        cosine([1, 0, 0], [1, 0])


@given(
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    st.floats(1e-3, 1e3),
)
def test_cosine_scale_invariant(a, b, alpha):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    assert abs(cosine(alpha * a, b) - cosine(a, b)) <= 1e-12


def E(surface, label):
    return EntityAnnotation(surface, label)


def test_entity_f1_examples():
    ref = [E("ACME", "ORG"), E("Paris", "GPE")]
    assert entity_f1(ref, list(ref)) == 100.0
    assert entity_f1(ref, []) == 0.0
    assert entity_f1(ref, [E("ACME", "ORG"), E("Rome", "GPE")]) == pytest.approx(50.0)


def test_entity_f1_label_filter_and_multiset():
    ref = [E("ACME", "ORG"), E("ACME", "ORG"), E("Paris", "GPE")]
    cand = [E("ACME", "ORG"), E("Paris", "GPE"), E("Paris", "GPE")]
    # hits 2 of 3 candidates and 2 of 3 references
    assert entity_f1(ref, cand) == pytest.approx(200 / 3)
    assert entity_f1(ref, cand, label_filter="GPE") == pytest.approx(200 / 3)
    assert entity_f1(ref, cand, label_filter="ORG") == pytest.approx(200 / 3)
    assert entity_f1(ref, cand, label_filter="DATE") == 100.0


def test_entity_annotation_validation():
    with pytest.raises(DataError):
        EntityAnnotation("", "ORG")


def test_read_entities_jsonl(tmp_path):
    p = tmp_path / "ents.jsonl"
    p.write_text(
        '{"id": "1", "entities": [{"surface": "ACME", "label": "ORG"}]}\n\n'
        '{"id": 2, "entities": []}\n'
    )
    got = read_entities_jsonl(str(p))
    assert got == {"1": [E("ACME", "ORG")], "2": []}
    p.write_text('{"id": "1"}\n')
    with pytest.raises(DataError, match=":1:"):
        read_entities_jsonl(str(p))
