"""Stratified k-fold cross-validation of location classifiers."""

from __future__ import annotations

import csv
import io
import json
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from geodiverse.classify import ClassifierSpec, EncodedCorpus, Variant, predict_encoded, train_encoded
from geodiverse.corpus import MicroPost, location_label
from geodiverse.gazetteer import Level, LocationHierarchy


class FoldError(ValueError):
    pass


class EvalError(RuntimeError):
    pass


def _location_counts(posts: Iterable[MicroPost], level: Level, h: LocationHierarchy) -> Counter:
    counts: Counter = Counter()
    for p in posts:
        lab = location_label(p, level, h)
        if lab is not None:
            counts[lab] += 1
    return counts


def select_locations(posts: Sequence[MicroPost], level, hierarchy: LocationHierarchy) -> list[str]:
    """Locations usable for evaluation at ``level``.

    Every region with posts qualifies. A province qualifies when its post
    count reaches the median over all provinces of the hierarchy
    (provinces without posts count as zero).
    """
    level = Level.parse(level)
    counts = _location_counts(posts, level, hierarchy)
    if level is Level.REGION:
        return sorted(loc for loc, n in counts.items() if n > 0)
    if level is not Level.PROVINCE:
        raise ValueError("evaluation level must be province or region")
    return sorted(eligible_by_median({u.id: counts.get(u.id, 0) for u in hierarchy.units_at(level)}))


def eligible_by_median(counts: dict[str, int]) -> list[str]:
    if not counts:
        return []
    median = statistics.median(counts.values())
    return sorted(loc for loc, n in counts.items() if n >= median and n > 0)


def stratify(labels: Sequence, k: int, seed: int = 0) -> list[np.ndarray]:
    """Split positions into k folds preserving label proportions.

    Each label's posts are shuffled, every fold receives ``n // k`` of
    them, and the ``n % k`` leftovers go to the folds that are currently
    smallest (lowest index first), so per-label fold sizes differ by at
    most one and fold totals stay balanced.
    """
    if k < 2:
        raise FoldError("need at least 2 folds")
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    short = sorted(str(lab) for lab, idx in groups.items() if len(idx) < k)
    if short:
        raise FoldError(f"locations with fewer than {k} posts: {', '.join(short)}")

    folds: list[list[int]] = [[] for _ in range(k)]
    for lab in sorted(groups, key=str):
        idx = np.asarray(groups[lab])
        idx = idx[rng.permutation(len(idx))]
        base, extra = divmod(len(idx), k)
        sizes = np.full(k, base)
        if extra:
            current = np.asarray([len(f) for f in folds])
            sizes[np.argsort(current, kind="stable")[:extra]] += 1
        start = 0
        for f, n in enumerate(sizes):
            folds[f].extend(idx[start : start + n].tolist())
            start += n
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class FoldPlan:
    folds: list[list[str]]
    level: Level
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.folds)

    def check(self, labels: dict[str, str]) -> None:
        """Raise FoldError unless folds are disjoint, cover ``labels`` and are proportional."""
        seen: set[str] = set()
        for fold in self.folds:
            for pid in fold:
                if pid in seen:
                    raise FoldError(f"post {pid} in more than one fold")
                seen.add(pid)
        if seen != set(labels):
            raise FoldError("folds do not cover the eligible posts")
        totals = Counter(labels.values())
        for fold in self.folds:
            in_fold = Counter(labels[pid] for pid in fold)
            for loc, n in totals.items():
                if abs(in_fold.get(loc, 0) - n / self.k) >= 1:
                    raise FoldError(f"location {loc} fold size {in_fold.get(loc, 0)} far from {n / self.k:.2f}")


def stratified_folds(
    posts: Sequence[MicroPost],
    k: int = 10,
    level=Level.REGION,
    hierarchy: Optional[LocationHierarchy] = None,
    seed: int = 0,
) -> FoldPlan:
    """Fold plan over the posts that have a location label at ``level``."""
    level = Level.parse(level)
    if hierarchy is None:
        raise ValueError("stratified_folds needs the location hierarchy")
    labelled = [(p.id, lab) for p in posts if (lab := location_label(p, level, hierarchy)) is not None]
    folds = stratify([lab for _, lab in labelled], k, seed)
    return FoldPlan([[labelled[i][0] for i in f] for f in folds], level, seed)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass
class EvalReport:
    spec: ClassifierSpec
    k: int
    seed: int
    locations: list[str]
    fold_accuracy: list[float]
    fold_sizes: list[int]
    baseline_accuracy: list[float]
    location_accuracy: dict[str, float]
    location_totals: dict[str, int]
    baseline_location_accuracy: dict[str, float] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return _mean_std(self.fold_accuracy)[0]

    @property
    def std(self) -> float:
        return _mean_std(self.fold_accuracy)[1]

    @property
    def baseline_mean(self) -> float:
        return _mean_std(self.baseline_accuracy)[0]

    @property
    def baseline_std(self) -> float:
        return _mean_std(self.baseline_accuracy)[1]

    @property
    def location_mean(self) -> float:
        return _mean_std(list(self.location_accuracy.values()))[0]

    @property
    def location_std(self) -> float:
        return _mean_std(list(self.location_accuracy.values()))[1]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "folds": self.k,
            "seed": self.seed,
            "locations": self.locations,
            "accuracy": {"mean": self.mean, "std": self.std, "per_fold": self.fold_accuracy},
            "baseline": {"mean": self.baseline_mean, "std": self.baseline_std, "per_fold": self.baseline_accuracy},
            "location_accuracy": {
                "mean": self.location_mean,
                "std": self.location_std,
                "per_location": self.location_accuracy,
            },
            "fold_sizes": self.fold_sizes,
            "location_totals": self.location_totals,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def fold_rows(self) -> list[dict]:
        return [
            {"fold": i, "n_test": n, "accuracy": acc, "baseline_accuracy": base}
            for i, (n, acc, base) in enumerate(zip(self.fold_sizes, self.fold_accuracy, self.baseline_accuracy))
        ]

    def location_rows(self) -> list[dict]:
        return [
            {
                "location": loc,
                "n_test": self.location_totals[loc],
                "accuracy": self.location_accuracy[loc],
                "baseline_accuracy": self.baseline_location_accuracy.get(loc, float("nan")),
            }
            for loc in self.locations
        ]

    def to_csv(self) -> str:
        """Fold table, a blank line, then the location table."""
        buf = io.StringIO()
        for n, rows in enumerate((self.fold_rows(), self.location_rows())):
            if n:
                buf.write("\n")
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        return buf.getvalue()


def _run_fold(enc: EncodedCorpus, folds: list[np.ndarray], i: int, spec: ClassifierSpec, seed: int):
    test = folds[i]
    train_rows = np.concatenate([f for j, f in enumerate(folds) if j != i])
    try:
        fitted = train_encoded(enc, train_rows, spec, seed)
        base = train_encoded(enc, train_rows, ClassifierSpec(Variant.BASELINE, spec.level), seed)
    except Exception as exc:
        raise EvalError(f"fold {i}: {exc}") from exc
    code = {loc: c for c, loc in enumerate(enc.locations)}
    to_global = np.asarray([code[loc] for loc in fitted.index.location_ids])
    pred = to_global[predict_encoded(fitted, enc, test)]
    base_pred = np.asarray([code[loc] for loc in base.index.location_ids])[predict_encoded(base, enc, test)]
    truth = enc.labels[test]
    return pred == truth, base_pred == truth


def cross_validate(
    posts: Sequence[MicroPost],
    spec: ClassifierSpec,
    hierarchy: LocationHierarchy,
    k: int = 10,
    seed: int = 0,
    locations: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> EvalReport:
    """k-fold stratified evaluation of ``spec`` against the majority baseline.

    A prediction is correct when it equals the author's location. Only
    ``locations`` (default: ``select_locations``) are evaluated.
    """
    if locations is None:
        locations = select_locations(posts, spec.level, hierarchy)
    allowed = set(locations)
    kept = [p for p in posts if location_label(p, spec.level, hierarchy) in allowed]
    enc = EncodedCorpus.from_posts(kept, spec.level, hierarchy)
    folds = stratify([enc.locations[c] for c in enc.labels], k, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda i: _run_fold(enc, folds, i, spec, seed), range(k)))
    else:
        results = [_run_fold(enc, folds, i, spec, seed) for i in range(k)]

    correct = np.zeros(len(enc), dtype=bool)
    base_correct = np.zeros(len(enc), dtype=bool)
    fold_acc, base_acc = [], []
    for fold, (ok, base_ok) in zip(folds, results):
        correct[fold] = ok
        base_correct[fold] = base_ok
        fold_acc.append(float(ok.mean()))
        base_acc.append(float(base_ok.mean()))

    loc_acc, loc_base, loc_tot = {}, {}, {}
    for c, loc in enumerate(enc.locations):
        mask = enc.labels == c
        loc_tot[loc] = int(mask.sum())
        loc_acc[loc] = float(correct[mask].mean())
        loc_base[loc] = float(base_correct[mask].mean())
    return EvalReport(
        spec=spec,
        k=k,
        seed=seed,
        locations=list(enc.locations),
        fold_accuracy=fold_acc,
        fold_sizes=[len(f) for f in folds],
        baseline_accuracy=base_acc,
        location_accuracy=loc_acc,
        location_totals=loc_tot,
        baseline_location_accuracy=loc_base,
    )
