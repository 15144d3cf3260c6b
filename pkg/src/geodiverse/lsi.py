"""Latent semantic indexing: truncated SVD of a TF-IDF term-document matrix.

``M = T S D^T``; vectors are projected as ``v T S^-1``. Small matrices use
LAPACK's dense SVD; larger ones a randomized range finder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from geodiverse.vsm import TfIdfModel, WeightedVector, transform_many

logger = logging.getLogger(__name__)

DEFAULT_K = 200
DENSE_LIMIT = 1000
RELATIVE_CUTOFF = 1e-10


class LsiError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LsiModel:
    T: np.ndarray  # t x k, orthonormal columns
    S: np.ndarray  # k singular values, non-increasing
    requested_k: int
    method: str = "dense"

    @property
    def k(self) -> int:
        return len(self.S)

    @property
    def n_terms(self) -> int:
        return self.T.shape[0]

    @property
    def shortfall(self) -> int:
        return self.requested_k - self.k


def term_doc_matrix(model: TfIdfModel, documents: Sequence) -> sp.csc_matrix:
    """t x d matrix whose column j holds the TF-IDF weights of document j."""
    return sp.csc_matrix(transform_many(model, documents).T)


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of every left vector positive, for reproducibility
    if U.size == 0:
        return U, Vt
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1
    return U * signs, Vt * signs[:, None]


def dense_svd(M, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return U[:, :k], s[:k], Vt[:k]


def randomized_svd(
    M,
    k: int,
    oversample: int = 10,
    power_iterations: int = 2,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-k SVD via a Gaussian range finder with QR-stabilized power iterations."""
    rng = np.random.default_rng(0) if rng is None else rng
    t, d = M.shape
    width = min(k + oversample, t, d)
    omega = rng.standard_normal((d, width))
    Q, _ = np.linalg.qr(M @ omega)
    for _ in range(power_iterations):
        Z, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ Z)
    B = np.asarray((M.T @ Q).T)  # Q^T M without densifying M
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub
    return U[:, :k], s[:k], Vt[:k]


def fit(
    matrix,
    k: int = DEFAULT_K,
    method: str = "auto",
    oversample: int = 10,
    power_iterations: int = 2,
    seed: int = 0,
) -> LsiModel:
    """Truncated SVD keeping the top ``k`` singular triplets.

    Values below ``1e-10 * S_max`` are discarded, so a rank-deficient matrix
    yields fewer than ``k`` dimensions (see ``LsiModel.shortfall``).
    """
    if k < 1:
        raise LsiError("k must be >= 1")
    t, d = matrix.shape
    if t == 0 or d == 0:
        raise LsiError("empty term-document matrix")
    nnz = matrix.count_nonzero() if sp.issparse(matrix) else np.count_nonzero(matrix)
    if nnz == 0:
        raise LsiError("all-zero term-document matrix")
    k_eff = min(k, t, d)
    if method == "auto":
        small = min(t, d)
        method = "dense" if small <= DENSE_LIMIT or 2 * (k_eff + oversample) >= small else "randomized"
    if method == "dense":
        U, s, _ = dense_svd(matrix, k_eff)
    elif method == "randomized":
        M = sp.csr_matrix(matrix) if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
        U, s, _ = randomized_svd(M, k_eff, oversample, power_iterations, np.random.default_rng(seed))
    else:
        raise LsiError(f"unknown SVD method {method!r}")

    keep = s > RELATIVE_CUTOFF * s[0]
    U, s = U[:, keep], s[keep]
    U, _ = _fix_signs(U, np.zeros((len(s), 0)))
    if len(s) < k:
        logger.info("LSI rank shortfall: requested k=%d, kept %d dimensions", k, len(s))
    return LsiModel(np.ascontiguousarray(U), s.copy(), requested_k=k, method=method)


def project(model: LsiModel, v: Union[WeightedVector, np.ndarray]) -> np.ndarray:
    """Map a term-space vector into the latent space: ``(v T) / S``."""
    if isinstance(v, WeightedVector):
        if len(v) and (v.indices.max() >= model.n_terms or v.indices.min() < 0):
            raise LsiError("vector indices exceed the model vocabulary")
        return (v.weights @ model.T[v.indices]) / model.S
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.n_terms,):
        raise LsiError(f"vector length {v.shape} does not match vocabulary size {model.n_terms}")
    return (v @ model.T) / model.S


def project_many(model: LsiModel, X) -> np.ndarray:
    """Row-wise projection of an n x t (sparse or dense) matrix."""
    if X.shape[1] != model.n_terms:
        raise LsiError(f"matrix has {X.shape[1]} columns, vocabulary has {model.n_terms}")
    return np.asarray(X @ model.T) / model.S


def document_vectors(model: LsiModel, matrix) -> np.ndarray:
    """Rows of D recovered as ``M^T T S^-1``."""
    return project_many(model, matrix.T)


def to_arrays(model: LsiModel) -> Mapping[str, np.ndarray]:
    return {"lsi_T": model.T, "lsi_S": model.S, "lsi_requested_k": np.asarray(model.requested_k)}


def from_arrays(arrays: Mapping[str, np.ndarray], method: str = "dense") -> LsiModel:
    return LsiModel(np.asarray(arrays["lsi_T"]), np.asarray(arrays["lsi_S"]), int(np.asarray(arrays["lsi_requested_k"]).item()), method)
