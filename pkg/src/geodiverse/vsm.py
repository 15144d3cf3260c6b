"""Vocabulary, TF-IDF weighting and cosine similarity on sparse vectors.

Weights are raw term counts times ``ln(N / df)``. Terms present in every
training document get zero weight and are dropped from vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class Vocabulary:
    """Bijective term <-> dense index map."""

    def __init__(self, terms: Iterable[str]):
        self.terms: list[str] = list(terms)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: object) -> bool:
        return term in self.index

    def __getitem__(self, term: str) -> int:
        return self.index[term]

    def get(self, term: str, default=None):
        return self.index.get(term, default)

    def term(self, i: int) -> str:
        return self.terms[i]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.terms == other.terms


@dataclass(frozen=True, eq=False)
class WeightedVector:
    """Sparse non-negative vector, indices strictly increasing, no stored zeros."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.indices.shape != self.weights.shape:
            raise ValueError("indices and weights differ in length")

    @classmethod
    def empty(cls) -> "WeightedVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "WeightedVector":
        items = sorted((int(i), float(w)) for i, w in mapping.items() if w != 0)
        if not items:
            return cls.empty()
        idx, w = zip(*items)
        return cls(np.asarray(idx, dtype=np.int64), np.asarray(w, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.indices)

    def __mul__(self, alpha: float) -> "WeightedVector":
        if alpha == 0:
            return WeightedVector.empty()
        return WeightedVector(self.indices, self.weights * alpha)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.indices.tolist(), self.weights.tolist()))

    def to_dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.indices] = self.weights
        return out


@dataclass(frozen=True, eq=False)
class TfIdfModel:
    vocabulary: Vocabulary
    df: np.ndarray
    n_docs: int

    @property
    def idf(self) -> np.ndarray:
        return np.log(self.n_docs / self.df)

    def to_dict(self) -> dict:
        return {"terms": self.vocabulary.terms, "df": self.df.tolist(), "n_docs": self.n_docs}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TfIdfModel":
        return cls(Vocabulary(d["terms"]), np.asarray(d["df"], dtype=np.int64), int(d["n_docs"]))


def _counts_of(doc) -> Mapping[str, int]:
    return doc.counts if hasattr(doc, "counts") else doc


def fit(documents: Sequence) -> TfIdfModel:
    """Fit document frequencies over Documents (or plain token-count mappings)."""
    if len(documents) == 0:
        raise ValueError("cannot fit TF-IDF on an empty document collection")
    df: dict[str, int] = {}
    for doc in documents:
        for term, c in _counts_of(doc).items():
            if c > 0:
                df[term] = df.get(term, 0) + 1
    terms = sorted(df)
    return TfIdfModel(Vocabulary(terms), np.asarray([df[t] for t in terms], dtype=np.int64), len(documents))


def transform(model: TfIdfModel, token_counts: Mapping[str, int]) -> WeightedVector:
    index = model.vocabulary.index
    pairs = sorted((index[t], c) for t, c in token_counts.items() if c > 0 and t in index)
    if not pairs:
        return WeightedVector.empty()
    idx = np.fromiter((i for i, _ in pairs), dtype=np.int64, count=len(pairs))
    tf = np.fromiter((c for _, c in pairs), dtype=np.float64, count=len(pairs))
    w = tf * model.idf[idx]
    keep = w > 0
    return WeightedVector(idx[keep], w[keep])


def transform_many(model: TfIdfModel, counts: Sequence[Mapping[str, int]]) -> sp.csr_matrix:
    """Row-per-input CSR matrix of TF-IDF weights (same values as ``transform``)."""
    index = model.vocabulary.index
    rows, cols, vals = [], [], []
    for r, c in enumerate(counts):
        for term, n in _counts_of(c).items():
            j = index.get(term)
            if j is not None and n > 0:
                rows.append(r)
                cols.append(j)
                vals.append(n)
    m = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(counts), len(model.vocabulary)),
    )
    m.sum_duplicates()
    m = m @ sp.diags(model.idf)
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def row_vector(m: sp.csr_matrix, i: int) -> WeightedVector:
    start, end = m.indptr[i], m.indptr[i + 1]
    return WeightedVector(m.indices[start:end].astype(np.int64), m.data[start:end].astype(np.float64))


def cosine(a: WeightedVector, b: WeightedVector) -> float:
    """Cosine similarity; 0 when either vector is empty."""
    if len(a) == 0 or len(b) == 0:
        return 0.0
    _, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    if len(ia) == 0:
        return 0.0
    dot = float(np.dot(a.weights[ia], b.weights[ib]))
    denom = a.norm() * b.norm()
    return dot / denom if denom > 0 else 0.0


def cosine_matrix(queries, references) -> np.ndarray:
    """Pairwise cosine between rows of two matrices (sparse or dense); zero rows score 0."""
    if sp.issparse(queries):
        qn = np.sqrt(np.asarray(queries.multiply(queries).sum(axis=1)).ravel())
    else:
        qn = np.linalg.norm(queries, axis=1)
    if sp.issparse(references):
        rn = np.sqrt(np.asarray(references.multiply(references).sum(axis=1)).ravel())
    else:
        rn = np.linalg.norm(references, axis=1)
    dots = queries @ references.T
    dots = dots.toarray() if sp.issparse(dots) else np.asarray(dots)
    denom = np.outer(qn, rn)
    out = np.zeros_like(dots, dtype=np.float64)
    np.divide(dots, denom, out=out, where=denom > 0)
    return out
