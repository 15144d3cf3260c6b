"""Centroid location classifiers over TF-IDF and LSI spaces.

Each variant fits its weighting model on a different kind of document
(users, locations or popular hashtags), then stores one reference vector
per location built from all of that location's training posts. A query is
assigned to the reference with the highest cosine similarity; ties go to
the location with more training posts, then to the smaller id.
"""

from __future__ import annotations

import enum
import io
import json
import logging
import os
import zipfile
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from geodiverse import lsi as lsi_mod
from geodiverse.corpus import GroupingError, MicroPost, location_label, token_surfaces
from geodiverse.gazetteer import Level, LocationHierarchy
from geodiverse.vsm import TfIdfModel, Vocabulary, WeightedVector, cosine_matrix, row_vector, transform_many

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class Variant(enum.Enum):
    BASELINE = "baseline"
    TFIDF_U = "tfidf-u"
    TFIDF_L = "tfidf-l"
    TFIDF_H = "tfidf-h"
    LSI_U = "lsi-u"


@dataclass(frozen=True)
class ClassifierSpec:
    variant: Variant
    level: Level = Level.REGION
    k: int = lsi_mod.DEFAULT_K
    top_fraction: float = 0.01
    skip: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "level", Level.parse(self.level))
        if self.level not in (Level.PROVINCE, Level.REGION):
            raise ValueError("classifier level must be province or region")
        if self.k < 1:
            raise ValueError("LSI k must be >= 1")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "level": self.level.value,
            "k": self.k,
            "top_fraction": self.top_fraction,
            "skip": self.skip,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassifierSpec":
        return cls(Variant(d["variant"]), Level.parse(d["level"]), int(d["k"]), float(d["top_fraction"]), int(d["skip"]))


@dataclass(frozen=True)
class Prediction:
    ranked: list[tuple[str, float]]

    @property
    def chosen(self) -> str:
        return self.ranked[0][0]

    @property
    def score(self) -> float:
        return self.ranked[0][1]

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "ranked": [{"location": loc, "score": score} for loc, score in self.ranked],
        }


@dataclass(eq=False)
class LocationIndex:
    spec: ClassifierSpec
    location_ids: list[str]
    tweet_counts: np.ndarray
    tfidf: Optional[TfIdfModel] = None
    lsi: Optional[lsi_mod.LsiModel] = None
    # L x t sparse (TF-IDF variants) or L x k dense (LSI)
    references: Union[sp.csr_matrix, np.ndarray, None] = None
    n_model_docs: int = 0
    priority: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.location_ids) < 2:
            raise TrainingError("an index needs at least 2 locations")
        order = sorted(range(len(self.location_ids)), key=lambda i: (-self.tweet_counts[i], self.location_ids[i]))
        self.priority = np.empty(len(order), dtype=np.int64)
        self.priority[order] = np.arange(len(order))

    @property
    def degenerate(self) -> np.ndarray:
        if self.references is None:
            return np.ones(len(self.location_ids), dtype=bool)
        if sp.issparse(self.references):
            return np.diff(self.references.indptr) == 0
        return ~np.any(self.references != 0, axis=1)

    def reference(self, location_id: str) -> Union[WeightedVector, np.ndarray]:
        i = self.location_ids.index(location_id)
        if sp.issparse(self.references):
            return row_vector(self.references, i)
        return self.references[i]

    def counts_by_location(self) -> dict[str, int]:
        return {loc: int(c) for loc, c in zip(self.location_ids, self.tweet_counts)}


class EncodedCorpus:
    """Posts as a sparse post x term count matrix with integer location labels.

    Built once so folds can train on row subsets without re-tokenizing.
    """

    def __init__(
        self,
        counts: Sequence[Mapping[str, int]],
        labels: Sequence[str],
        authors: Sequence[str],
        post_ids: Optional[Sequence[str]] = None,
    ):
        if not (len(counts) == len(labels) == len(authors)):
            raise ValueError("counts, labels and authors differ in length")
        self.post_ids = list(post_ids) if post_ids is not None else [str(i) for i in range(len(counts))]
        self.terms = sorted({t for c in counts for t in c})
        col = {t: j for j, t in enumerate(self.terms)}
        rows, cols, vals = [], [], []
        for r, c in enumerate(counts):
            for t, n in c.items():
                if n > 0:
                    rows.append(r)
                    cols.append(col[t])
                    vals.append(n)
        self.C = sp.csr_matrix(
            (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(len(counts), len(self.terms)),
        )
        self.C.sum_duplicates()
        self.is_hashtag = np.fromiter((t.startswith("#") for t in self.terms), dtype=bool, count=len(self.terms))
        self.locations, self.labels = np.unique(np.asarray(labels, dtype=object), return_inverse=True)
        self.locations = [str(x) for x in self.locations]
        _, self.authors = np.unique(np.asarray(authors, dtype=object), return_inverse=True)

    def __len__(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_posts(cls, posts: Sequence[MicroPost], level: Level, hierarchy: LocationHierarchy) -> "EncodedCorpus":
        """Encode posts labelled at ``level``; posts without a label there are dropped."""
        kept = [(p, lab) for p in posts if (lab := location_label(p, level, hierarchy)) is not None]
        return cls(
            [p.token_counts for p, _ in kept],
            [lab for _, lab in kept],
            [p.author_id for p, _ in kept],
            [p.id for p, _ in kept],
        )


def _indicator(keys: np.ndarray, n_groups: int) -> sp.csr_matrix:
    n = len(keys)
    return sp.csr_matrix((np.ones(n), (keys, np.arange(n))), shape=(n_groups, n))


def _model_documents(enc: EncodedCorpus, rows: np.ndarray, spec: ClassifierSpec) -> sp.csr_matrix:
    """Document x term count matrix for the variant's grouping strategy."""
    C = enc.C[rows]
    if spec.variant in (Variant.TFIDF_U, Variant.LSI_U):
        _, keys = np.unique(enc.authors[rows], return_inverse=True)
        return sp.csr_matrix(_indicator(keys, keys.max() + 1) @ C)
    if spec.variant is Variant.TFIDF_L:
        _, keys = np.unique(enc.labels[rows], return_inverse=True)
        return sp.csr_matrix(_indicator(keys, keys.max() + 1) @ C)
    # TF-IDF H: hashtags ranked by number of posts mentioning them
    tag_cols = np.flatnonzero(enc.is_hashtag)
    present = sp.csc_matrix(C[:, tag_cols] > 0)
    freq = np.diff(present.indptr)
    used = freq > 0
    tag_cols, freq, present = tag_cols[used], freq[used], present[:, np.flatnonzero(used)]
    if len(tag_cols) == 0:
        raise GroupingError("no hashtags in corpus")
    # terms are sorted, so column order is the lexicographic tie-break
    ranked = np.lexsort((tag_cols, -freq))
    n_keep = max(1, int(np.floor(spec.top_fraction * len(ranked) + 1e-9)))
    kept = ranked[spec.skip : spec.skip + n_keep]
    if len(kept) == 0:
        raise GroupingError(f"no hashtags left after skipping the top {spec.skip}")
    G = sp.csr_matrix(present[:, kept].T.astype(np.float64))
    return sp.csr_matrix(G @ C)


def _fit_tfidf(doc_counts: sp.csr_matrix, terms: Sequence[str]) -> tuple[TfIdfModel, np.ndarray]:
    df = np.diff(sp.csc_matrix(doc_counts > 0).indptr)
    cols = np.flatnonzero(df)
    model = TfIdfModel(Vocabulary([terms[j] for j in cols]), df[cols].astype(np.int64), doc_counts.shape[0])
    return model, cols


def _weights(counts: sp.csr_matrix, model: TfIdfModel) -> sp.csr_matrix:
    m = sp.csr_matrix(counts @ sp.diags(model.idf))
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass
class _Fitted:
    index: LocationIndex
    cols: Optional[np.ndarray]  # corpus columns of the model vocabulary


def train_encoded(enc: EncodedCorpus, rows: np.ndarray, spec: ClassifierSpec, seed: int = 0) -> _Fitted:
    rows = np.asarray(rows, dtype=np.int64)
    present = np.unique(enc.labels[rows])
    if len(present) < 2:
        raise TrainingError(f"need at least 2 locations with training posts, got {len(present)}")
    loc_ids = [enc.locations[i] for i in present]
    _, loc_keys = np.unique(enc.labels[rows], return_inverse=True)
    tweet_counts = np.bincount(loc_keys, minlength=len(present)).astype(np.int64)
    if spec.variant is Variant.BASELINE:
        return _Fitted(LocationIndex(spec, loc_ids, tweet_counts), None)

    docs = _model_documents(enc, rows, spec)
    model, cols = _fit_tfidf(docs, enc.terms)
    ref_counts = sp.csr_matrix(_indicator(loc_keys, len(present)) @ enc.C[rows][:, cols])
    refs = _weights(ref_counts, model)
    lsi_model = None
    if spec.variant is Variant.LSI_U:
        M = _weights(sp.csr_matrix(docs[:, cols]), model).T
        lsi_model = lsi_mod.fit(M, spec.k, seed=seed)
        refs = lsi_mod.project_many(lsi_model, refs)
    index = LocationIndex(spec, loc_ids, tweet_counts, model, lsi_model, refs, n_model_docs=docs.shape[0])
    return _Fitted(index, cols)


def train(
    posts: Sequence[MicroPost],
    spec: ClassifierSpec,
    hierarchy: LocationHierarchy,
    seed: int = 0,
) -> LocationIndex:
    """Train a location index from geolocated, pre-filtered posts.

    Posts are labelled with their author's unit at ``spec.level``; posts
    whose author resolves above that level are ignored.
    """
    enc = EncodedCorpus.from_posts(posts, spec.level, hierarchy)
    if len(enc) == 0:
        raise TrainingError(f"no posts labelled at {spec.level.value} level")
    return train_encoded(enc, np.arange(len(enc)), spec, seed).index


def _score(index: LocationIndex, weights: sp.csr_matrix) -> np.ndarray:
    if index.lsi is not None:
        return cosine_matrix(lsi_mod.project_many(index.lsi, weights), index.references)
    return cosine_matrix(weights, index.references)


def _choose(index: LocationIndex, scores: np.ndarray) -> np.ndarray:
    best = scores.max(axis=1, keepdims=True)
    pri = np.where(scores == best, index.priority[None, :], len(index.priority))
    return np.argmin(pri, axis=1)


def _rank(index: LocationIndex, scores: np.ndarray) -> Prediction:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], index.priority[i]))
    return Prediction([(index.location_ids[i], float(scores[i])) for i in order])


def score_counts(index: LocationIndex, counts: Sequence[Mapping[str, int]]) -> np.ndarray:
    """n x L cosine scores of token-count mappings against every reference."""
    if index.spec.variant is Variant.BASELINE:
        return np.zeros((len(counts), len(index.location_ids)))
    return _score(index, transform_many(index.tfidf, counts))


def predict_baseline(index: LocationIndex) -> Prediction:
    """Always the location with most training posts."""
    total = float(index.tweet_counts.sum())
    order = np.argsort(index.priority)
    return Prediction([(index.location_ids[i], float(index.tweet_counts[i] / total)) for i in order])


def predict(index: LocationIndex, text: str) -> Prediction:
    if index.spec.variant is Variant.BASELINE:
        return predict_baseline(index)
    scores = score_counts(index, [Counter(token_surfaces(text))])[0]
    return _rank(index, scores)


def predict_many(index: LocationIndex, texts: Iterable[str]) -> list[str]:
    """Chosen location id for every text."""
    counts = [Counter(token_surfaces(t)) for t in texts]
    if not counts:
        return []
    if index.spec.variant is Variant.BASELINE:
        return [predict_baseline(index).chosen] * len(counts)
    chosen = _choose(index, score_counts(index, counts))
    return [index.location_ids[i] for i in chosen]


def predict_encoded(fitted: _Fitted, enc: EncodedCorpus, rows: np.ndarray) -> np.ndarray:
    """Chosen location positions (into ``fitted.index.location_ids``) for encoded posts."""
    index = fitted.index
    if index.spec.variant is Variant.BASELINE:
        return np.full(len(rows), int(np.argmin(index.priority)))
    weights = _weights(sp.csr_matrix(enc.C[rows][:, fitted.cols]), index.tfidf)
    return _choose(index, _score(index, weights))


def timeline_order(labels: Sequence[str], quota_per_location: int) -> list[int]:
    """Round-robin positions over labels, in order of first appearance."""
    if quota_per_location < 1:
        raise ValueError("quota_per_location must be >= 1")
    queues: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        queues.setdefault(lab, []).append(i)
    cursors = {lab: 0 for lab in queues}
    out: list[int] = []
    while len(out) < len(labels):
        for lab, queue in queues.items():
            start = cursors[lab]
            take = queue[start : start + quota_per_location]
            out.extend(take)
            cursors[lab] = start + len(take)
    return out


def diverse_timeline(index: LocationIndex, posts: Sequence[MicroPost], quota_per_location: int = 1) -> list[MicroPost]:
    """Interleave posts across their predicted locations.

    Each cycle emits at most ``quota_per_location`` posts per location; the
    input order is kept within a location.
    """
    labels = predict_many(index, [p.text for p in posts])
    return [posts[i] for i in timeline_order(labels, quota_per_location)]


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_index(index: LocationIndex, path: Union[str, os.PathLike]) -> None:
    """Write the index and its models as a zip of JSON metadata and .npy arrays."""
    meta = {
        "format": "geodiverse-index",
        "version": FORMAT_VERSION,
        "spec": index.spec.to_dict(),
        "location_ids": index.location_ids,
        "n_model_docs": index.n_model_docs,
        "tfidf": None,
        "lsi_method": index.lsi.method if index.lsi is not None else None,
    }
    arrays = {"tweet_counts": index.tweet_counts}
    if index.tfidf is not None:
        meta["tfidf"] = {"terms": index.tfidf.vocabulary.terms, "n_docs": index.tfidf.n_docs}
        arrays["df"] = index.tfidf.df
    if index.lsi is not None:
        arrays.update(lsi_mod.to_arrays(index.lsi))
        arrays["references"] = index.references
    elif index.references is not None:
        refs = index.references
        arrays.update(ref_data=refs.data, ref_indices=refs.indices, ref_indptr=refs.indptr,
                      ref_shape=np.asarray(refs.shape))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_DATE), json.dumps(meta, ensure_ascii=False, sort_keys=True))
        for name in sorted(arrays):
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", _ZIP_DATE), _npy_bytes(arrays[name]),
                        compress_type=zipfile.ZIP_DEFLATED)


def load_index(path: Union[str, os.PathLike]) -> LocationIndex:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {
                n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
                for n in zf.namelist() if n.endswith(".npy")
            }
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a geodiverse index ({exc})") from exc
    if meta.get("format") != "geodiverse-index" or meta.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported index format {meta.get('format')} v{meta.get('version')}")
    spec = ClassifierSpec.from_dict(meta["spec"])
    tfidf = None
    if meta["tfidf"] is not None:
        tfidf = TfIdfModel(Vocabulary(meta["tfidf"]["terms"]), arrays["df"].astype(np.int64), int(meta["tfidf"]["n_docs"]))
    lsi_model, refs = None, None
    if "lsi_T" in arrays:
        lsi_model = lsi_mod.from_arrays(arrays, meta.get("lsi_method") or "dense")
        refs = arrays["references"]
    elif "ref_data" in arrays:
        refs = sp.csr_matrix((arrays["ref_data"], arrays["ref_indices"], arrays["ref_indptr"]),
                             shape=tuple(arrays["ref_shape"]))
    return LocationIndex(spec, list(meta["location_ids"]), arrays["tweet_counts"].astype(np.int64),
                         tfidf, lsi_model, refs, int(meta["n_model_docs"]))
