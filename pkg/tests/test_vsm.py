import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geodiverse import vsm
from geodiverse.vsm import WeightedVector, cosine, cosine_matrix, fit, transform, transform_many


def _docs(*texts):
    return [Counter(t.split()) for t in texts]


def test_document_frequencies():
    model = fit(_docs("a b", "a"))
    assert model.vocabulary.terms == ["a", "b"]
    assert model.df.tolist() == [2, 1]
    assert model.n_docs == 2


def test_query_weight_ln2():
    model = fit(_docs("a b", "a"))
    v = transform(model, Counter(["b"]))
    assert v.to_dict() == {1: pytest.approx(math.log(2), abs=1e-12)}
    assert round(v.weights[0], 4) == 0.6931


def test_df_equal_n_is_dropped():
    model = fit(_docs("a b", "a"))
    assert len(transform(model, Counter(["a"]))) == 0


def test_oov_query_is_empty():
    model = fit(_docs("a b", "a"))
    assert len(transform(model, Counter(["zzz", "qq"]))) == 0


def test_raw_tf():
    model = fit(_docs("a b", "a", "c"))
    v = transform(model, Counter("b b b".split()))
    assert v.weights[0] == pytest.approx(3 * math.log(3))


def test_empty_fit_raises():
    with pytest.raises(ValueError):
        fit([])


def test_cosine_examples():
    v = WeightedVector.from_mapping({0: 1.0, 1: 2.0})
    assert cosine(v, v) == pytest.approx(1.0)
    assert cosine(WeightedVector.from_mapping({0: 1.0}), WeightedVector.from_mapping({1: 1.0})) == 0.0
    assert cosine(WeightedVector.from_mapping({0: 1.0, 1: 1.0}), WeightedVector.from_mapping({0: 1.0})) == pytest.approx(
        1 / math.sqrt(2)
    )
    assert cosine(WeightedVector.empty(), v) == 0.0
    assert cosine(WeightedVector.empty(), WeightedVector.empty()) == 0.0


def test_cosine_matrix_agrees():
    rng = np.random.default_rng(3)
    Q = rng.random((4, 6)) * (rng.random((4, 6)) < 0.5)
    R = rng.random((3, 6))
    Q[0] = 0
    got = cosine_matrix(Q, R)
    for i in range(4):
        for j in range(3):
            a = WeightedVector.from_mapping({k: Q[i, k] for k in np.flatnonzero(Q[i])})
            b = WeightedVector.from_mapping({k: R[j, k] for k in range(6)})
            assert got[i, j] == pytest.approx(cosine(a, b), abs=1e-12)
    assert np.all(got[0] == 0)


vectors = st.dictionaries(st.integers(0, 20), st.floats(0.01, 100), min_size=0, max_size=8).map(
    WeightedVector.from_mapping
)


@given(vectors, vectors, st.floats(0.001, 1000))
def test_cosine_properties(v, w, alpha):
    c = cosine(v, w)
    assert 0.0 <= c <= 1.0 + 1e-12
    assert abs(c - cosine(w, v)) <= 1e-12
    assert cosine(v * alpha, w) == pytest.approx(c, abs=1e-12)


def brute_force_tfidf(docs, query):
    """Dense TF-IDF written from the formula: tf(t, q) * ln(N / df(t)) over the training vocabulary."""
    terms = sorted({t for d in docs for t in d})
    N = len(docs)
    out = np.zeros(len(terms))
    for j, t in enumerate(terms):
        df = sum(1 for d in docs if d.get(t, 0) > 0)
        out[j] = query.get(t, 0) * math.log(N / df)
    return out


def random_corpus(rng, n_docs, n_terms):
    vocab = [f"t{i}" for i in range(n_terms)]
    docs = []
    for _ in range(n_docs):
        size = int(rng.integers(1, 30))
        docs.append(Counter(rng.choice(vocab, size=size).tolist()))
    return docs, vocab


def test_transform_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(10):
        docs, vocab = random_corpus(rng, int(rng.integers(1, 51)), int(rng.integers(1, 500)))
        model = fit(docs)
        queries = docs[:5] + [Counter(rng.choice(vocab + ["oov"], size=8).tolist())]
        dense = transform_many(model, queries).toarray()
        for q, row in zip(queries, dense):
            oracle = brute_force_tfidf(docs, q)
            assert np.max(np.abs(transform(model, q).to_dense(len(model.vocabulary)) - oracle)) <= 1e-9
            assert np.max(np.abs(row - oracle)) <= 1e-9


def test_model_round_trip():
    model = fit(_docs("a b", "a", "c d"))
    again = vsm.TfIdfModel.from_dict(model.to_dict())
    assert again.vocabulary == model.vocabulary
    assert np.array_equal(again.idf, model.idf)
