import numpy as np
import pytest

from embalign.errors import ConfigError, DataError, TrainingError
from embalign.generator import (
    DecodeRequest,
    NearestNeighborDecoder,
    ToyDecoder,
    build_vocab,
    cosine_scan,
    greedy_decode,
    init_params,
    nn_decode,
    sequence_loss,
    teacher_forcing_steps,
    train_toy_decoder,
)
from embalign.io import Corpus, Record
from embalign.linalg import l2_normalize_rows
from embalign.synthetic import random_unit_rows, synthetic_corpus

from .oracles.finite_diff import central_difference, max_relative_error


# -- nearest neighbour ------------------------------------------------------------


def brute_force_nearest(corpus, emb, q):
    best, best_i = -np.inf, None
    for i, row in enumerate(emb):
        c = float(row @ q / (np.linalg.norm(row) * np.linalg.norm(q)))
        if c > best or (c == best and corpus[i].id < corpus[best_i].id):
            best, best_i = c, i
    return best_i


def test_nn_exact_match(rng):
    corpus = synthetic_corpus(20, seed=1)
    emb = rng.normal(size=(20, 6))
    for i in (0, 7, 19):
        assert nn_decode(emb[i], corpus, emb) == corpus[i].text


def test_nn_single_record(rng):
    corpus = Corpus([Record("only", "just this", "en")])
    assert nn_decode(rng.normal(size=3), corpus, rng.normal(size=(1, 3))) == "just this"


def test_nn_angles():
    angles = np.deg2rad([0, 45, 90])
    emb = np.column_stack([np.cos(angles), np.sin(angles)])
    corpus = Corpus.from_texts(["zero", "forty five", "ninety"])
    q = np.array([np.cos(np.deg2rad(10)), np.sin(np.deg2rad(10))])
    assert nn_decode(q, corpus, emb) == "zero"


def test_nn_tie_goes_to_lowest_id():
    emb = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    corpus = Corpus([Record("b", "second"), Record("a", "first"), Record("c", "third")])
    assert nn_decode([1.0, 0.0], corpus, emb) == "first"


def test_nn_equals_brute_force_scan(rng):
    corpus = synthetic_corpus(60, seed=2)
    emb = rng.normal(size=(60, 8))
    dec = NearestNeighborDecoder(corpus, emb)
    for _ in range(50):
        q = rng.normal(size=8)
        assert dec.nearest(q) == brute_force_nearest(corpus, emb, q)


def test_nn_errors(rng):
    corpus = synthetic_corpus(3, seed=0)
    with pytest.raises(DataError, match="zero-norm"):
        nn_decode(np.zeros(4), corpus, rng.normal(size=(3, 4)))
    with pytest.raises(DataError):
        nn_decode(np.ones(4), corpus, rng.normal(size=(2, 4)))
    with pytest.raises(DataError):
        NearestNeighborDecoder(Corpus([]), np.zeros((0, 4)))


def test_cosine_scan_zero_rows():
    s = cosine_scan(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([1.0, 0.0]))
    assert s[0] == -np.inf and s[1] == pytest.approx(np.sqrt(0.5))


def test_decode_request_validation():
    with pytest.raises(ConfigError):
        DecodeRequest(np.ones(2), max_tokens=0)
    with pytest.raises(ConfigError):
        DecodeRequest(np.ones(2), strategy="beam")


# -- toy decoder -----------------------------------------------------------------------


def tiny_instance():
    corpus = Corpus.from_texts(["red blue red", "blue", "blue red"])
    emb = random_unit_rows(3, 3, seed=4)
    vocab = build_vocab(corpus.texts)
    assert len(vocab) == 5
    params = init_params(len(vocab), 3, 4, seed=9, scale=0.5)
    params["b_h"] += 0.1
    params["b_out"] += np.linspace(-0.2, 0.2, 5)
    dec = ToyDecoder(vocab, params, 3)
    prev, target, owner = teacher_forcing_steps(dec.index, corpus, emb)
    return params, prev, emb[owner], target


def test_gradient_matches_finite_differences():
    params, prev, cond, target = tiny_instance()
    _, analytic = sequence_loss(params, prev, cond, target)
    numeric = central_difference(lambda p: sequence_loss(p, prev, cond, target)[0], params)
    for name in params:
        assert max_relative_error({name: analytic[name]}, {name: numeric[name]}) < 1e-4, name


def test_step_distributions_are_valid():
    params, prev, cond, _ = tiny_instance()
    dec = ToyDecoder(build_vocab(["red blue"]), params, 3)
    p = dec.step_distribution(prev, cond)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_memorize_single_sentence():
    corpus = Corpus.from_texts(["fast blue river"])
    emb = random_unit_rows(1, 4, seed=0)
    dec = train_toy_decoder(corpus, emb, hidden=16, lr=1e-2, epochs=200, batch=1, seed=0)
    assert dec.loss_history[-1] < 0.01
    assert greedy_decode(dec, emb[0]) == "fast blue river"


def test_zero_learning_rate_is_a_no_op():
    corpus = synthetic_corpus(4, seed=3)
    emb = random_unit_rows(4, 5, seed=3)
    dec = train_toy_decoder(corpus, emb, hidden=8, lr=0.0, epochs=5, batch=2, seed=1)
    fresh = init_params(len(dec.vocab), 5, 8, seed=1)
    for k in fresh:
        assert dec.params[k].tobytes() == fresh[k].tobytes()
    assert len(set(dec.loss_history)) == 1


def test_max_tokens_one():
    corpus = Corpus.from_texts(["fast blue river"])
    emb = random_unit_rows(1, 4, seed=0)
    dec = train_toy_decoder(corpus, emb, hidden=16, lr=1e-2, epochs=100, batch=1)
    assert len(greedy_decode(dec, emb[0], max_tokens=1).split()) <= 1


def test_overfit_ten_sentences_and_monotone_loss():
    corpus = synthetic_corpus(10, seed=0)
    emb = random_unit_rows(10, 16, seed=0)
    dec = train_toy_decoder(corpus, emb, hidden=64, lr=1e-2, epochs=300, batch=10, seed=0)
    hits = sum(greedy_decode(dec, emb[i]) == corpus[i].text for i in range(10))
    assert hits >= 9
    tail = np.array(dec.loss_history[10:])
    assert np.all(np.diff(tail) <= 1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_errors():
    with pytest.raises(DataError):
        train_toy_decoder(Corpus([]), np.zeros((0, 3)))
    with pytest.raises(DataError):
        train_toy_decoder(synthetic_corpus(2), np.ones((3, 3)))
    with pytest.raises(TrainingError, match="epoch 0"):
        train_toy_decoder(synthetic_corpus(3), random_unit_rows(3, 4, 0), hidden=8, lr=1e200, epochs=3, batch=3)


def test_unknown_tokens_map_to_unk():
    dec = train_toy_decoder(Corpus.from_texts(["a b"]), random_unit_rows(1, 2, 0), hidden=4, epochs=1)
    assert dec.encode_tokens(["a", "zzz"]) == [dec.index["a"], dec.index["<unk>"]]


def test_decoder_serialization_roundtrip(tmp_path):
    corpus = synthetic_corpus(5, seed=1)
    emb = random_unit_rows(5, 6, seed=1)
    dec = train_toy_decoder(corpus, emb, hidden=8, lr=1e-2, epochs=20, batch=5)
    path = tmp_path / "dec.bin"
    dec.save(str(path))
    back = ToyDecoder.load(str(path))
    assert back.vocab == dec.vocab and back.config == dec.config
    for k in dec.params:
        assert back.params[k].tobytes() == dec.params[k].tobytes()
    for i in range(5):
        assert greedy_decode(back, emb[i]) == greedy_decode(dec, emb[i])


def test_greedy_dim_check():
    dec = train_toy_decoder(Corpus.from_texts(["a b"]), random_unit_rows(1, 2, 0), hidden=4, epochs=1)
    with pytest.raises(DataError):
        greedy_decode(dec, np.ones(3))
