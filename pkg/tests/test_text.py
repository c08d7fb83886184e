from collections import Counter
import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from mvcca.exceptions import EmptyInputWarning, EmptyVocabularyError, ValidationError
from mvcca.text import (
    TagFeaturizer,
    build_vocabulary,
    compress_tags,
    idf_weights,
    read_corpus,
    read_stopwords,
    tfidf_weight,
    vectorize,
)

words = st.sampled_from([f"w{i}" for i in range(12)])
corpora = st.lists(st.lists(words, max_size=6), min_size=1, max_size=30)


def random_corpus(seed, n=500, vocab=60):
    r = np.random.default_rng(seed)
    return [[f"t{j}" for j in r.integers(vocab, size=r.integers(0, 8))] for _ in range(n)]


class TestVocabulary:
    def test_min_count(self):
        v = build_vocabulary([["a", "b"], ["a", "c"], ["a"]], min_count=2)
        assert v.terms == ("a",)

    def test_stopwords(self):
        v = build_vocabulary([["canon", "dog"]] * 5, stopwords={"canon"})
        assert v.terms == ("dog",)

    def test_counting_oracle(self):
        docs = random_corpus(0)
        v = build_vocabulary(docs, min_count=3)
        df = Counter()
        for d in docs:
            for t in set(d):
                df[t] += 1
        expect = sorted(((t, c) for t, c in df.items() if c >= 3), key=lambda x: (-x[1], x[0]))
        assert list(zip(v.terms, v.document_frequencies)) == expect

    def test_order_ties_lexicographic(self):
        v = build_vocabulary([["b", "a", "c"], ["c"]])
        assert v.terms == ("c", "a", "b")
        assert [v.index[t] for t in v.terms] == [0, 1, 2]

    def test_empty(self):
        with pytest.raises(EmptyVocabularyError):
            build_vocabulary([["a"]], min_count=2)
        with pytest.raises(EmptyVocabularyError):
            build_vocabulary([["the"]], stopwords={"the"})

    def test_max_terms(self):
        v = build_vocabulary([["a", "b"], ["a"]], max_terms=1)
        assert v.terms == ("a",)

    @given(corpora, st.integers(1, 3))
    def test_deterministic_and_consistent(self, docs, min_count):
        try:
            a = build_vocabulary(docs, min_count)
        except EmptyVocabularyError:
            return
        assert a == build_vocabulary(list(docs), min_count)
        assert len(set(a.terms)) == len(a.terms)
        assert all(c >= min_count for c in a.document_frequencies)


class TestVectorize:
    def test_dedup(self):
        v = build_vocabulary([["a", "b", "c"]])
        T = vectorize([["a", "a", "b"]], v)
        assert T.binary
        row = T.matrix.toarray()[0]
        assert row[v.index["a"]] == 1 and row[v.index["b"]] == 1 and row[v.index["c"]] == 0

    def test_oov_only_row(self):
        v = build_vocabulary([["a"]])
        T = vectorize([["zz", "yy"], ["a"]], v)
        assert T.matrix[0].nnz == 0
        assert T.empty_rows == (0,)
        assert T.oov_counts == (2, 0)

    @given(corpora)
    def test_nnz_oracle(self, docs):
        try:
            v = build_vocabulary(docs[: max(1, len(docs) // 2)])
        except EmptyVocabularyError:
            return
        T = vectorize(docs, v)
        expect = sum(len({t for t in d if t in v}) for d in docs)
        assert T.matrix.nnz == expect
        assert np.all(T.matrix.data == 1.0)

    def test_weights(self):
        v = build_vocabulary([["deer", "snow", "tree"]])
        a = vectorize([["deer", "snow"]], v, tag_weights={"snow": 6}).matrix.toarray()
        b = vectorize([{"deer": 1, "snow": 6}], v).matrix.toarray()
        np.testing.assert_array_equal(a, b)

    def test_bad_inputs(self):
        v = build_vocabulary([["a"]])
        with pytest.raises(ValidationError):
            vectorize(["a b"], v)
        with pytest.raises(ValidationError):
            vectorize([{"a": -1.0}], v)


class TestTfidf:
    def test_everywhere_and_once(self):
        docs = [["a", "b"], ["a"], ["a"], ["a", "c"]]
        v = build_vocabulary(docs)
        W = tfidf_weight(vectorize(docs, v)).matrix.toarray()
        assert np.all(W[:, v.index["a"]] == 0)
        assert W[0, v.index["b"]] == pytest.approx(math.log(4))

    def test_recompute_oracle(self):
        docs = random_corpus(1, n=200)
        v = build_vocabulary(docs)
        T = vectorize(docs, v)
        W = tfidf_weight(T).matrix.toarray()
        B = T.matrix.toarray()
        df = B.sum(axis=0)
        np.testing.assert_allclose(W, B * np.log(len(docs) / df), atol=1e-14)

    def test_empty_row_stays_zero(self):
        v = build_vocabulary([["a"], ["b"]])
        T = vectorize([["a"], ["b"], []], v)
        W = tfidf_weight(T)
        assert W.matrix[2].nnz == 0 and 2 in W.empty_rows

    def test_requires_binary(self):
        v = build_vocabulary([["a"]])
        with pytest.raises(ValidationError):
            tfidf_weight(vectorize([{"a": 2.0}], v))

    def test_idf_zero_df(self):
        np.testing.assert_array_equal(idf_weights(sp.csr_matrix((2, 3))), [0, 0, 0])


class TestCompression:
    def test_identity(self):
        F, model = compress_tags(sp.eye(5).tocsr(), d=5)
        np.testing.assert_allclose(model.singular_values, 1.0)
        np.testing.assert_allclose(F @ F.T, np.eye(5), atol=1e-12)

    def test_duplicated_rows(self):
        T = sp.csr_matrix(np.array([[1, 0, 1, 0], [1, 0, 1, 0], [0, 1, 0, 1], [1, 1, 0, 0]],
                                   dtype=float))
        F, _ = compress_tags(T, d=2)
        np.testing.assert_allclose(F[0], F[1], atol=1e-12)

    @pytest.mark.parametrize("dense_limit", [0, None])
    def test_gram_oracle(self, dense_limit):
        T = sp.random(40, 25, density=0.15, random_state=2, format="csr")
        T.data[:] = 1.0
        F, model = compress_tags(T, d=25)
        np.testing.assert_allclose(F @ F.T, (T @ T.T).toarray(), atol=1e-6)
        np.testing.assert_allclose(model.basis.T @ model.basis, np.eye(25), atol=1e-8)

    def test_gram_error_non_increasing(self):
        T = sp.random(60, 30, density=0.1, random_state=4, format="csr")
        G = (T @ T.T).toarray()
        errs = [np.linalg.norm(F @ F.T - G) for F, _ in (compress_tags(T, d) for d in range(1, 31))]
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))

    def test_reprojection(self):
        T = sp.random(80, 40, density=0.1, random_state=5, format="csr")
        F, model = compress_tags(T, d=10)
        np.testing.assert_allclose(model.project(T), F, rtol=1e-6, atol=1e-10)

    def test_d_too_large(self):
        with pytest.raises(ValidationError):
            compress_tags(sp.eye(3).tocsr(), d=4)


class TestFeaturizer:
    def test_round_trip(self):
        docs = random_corpus(3, n=100, vocab=30)
        tf = TagFeaturizer(n_components=8, random_state=0)
        F = tf.fit_transform(docs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyInputWarning)
            np.testing.assert_allclose(tf.transform(docs), F, atol=1e-10)

    def test_tfidf_and_empty_warning(self):
        docs = random_corpus(4, n=80, vocab=20) + [["a"], ["a"]]
        tf = TagFeaturizer(n_components=5, tfidf=True).fit(docs)
        assert tf.idf_ is not None
        with pytest.warns(EmptyInputWarning):
            z = tf.transform([["never-seen"]])
        np.testing.assert_array_equal(z, np.zeros((1, 5)))

    def test_matrix_input_shape_checked(self):
        tf = TagFeaturizer(n_components=2).fit([["a", "b"], ["b", "c"], ["a"]])
        with pytest.raises(ValidationError):
            tf.transform(sp.csr_matrix((1, 7)))

    def test_get_params(self):
        tf = TagFeaturizer(n_components=3, min_count=2)
        assert tf.get_params()["min_count"] == 2


def test_read_corpus_and_stopwords(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a b  c\n\nd\n", encoding="utf-8")
    assert read_corpus(p) == [["a", "b", "c"], [], ["d"]]
    s = tmp_path / "s.txt"
    s.write_text("the\n a \n\n", encoding="utf-8")
    assert read_stopwords(s) == {"the", "a"}
