"""Corpus reports: discriminative hashtags, population correlation,
posting activity, binned time series and geolocation coverage."""

from __future__ import annotations

import csv
import logging
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Mapping, Optional, Sequence, Union
from xml.sax.saxutils import escape

import numpy as np
from scipy import stats

from geodiverse import vsm
from geodiverse.corpus import MicroPost, format_timestamp, location_label
from geodiverse.gazetteer import Level, LocationHierarchy, NameIndex, resolve

logger = logging.getLogger(__name__)


def read_census(path: Union[str, os.PathLike]) -> dict[str, int]:
    """``unit_id,population`` CSV."""
    census = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            census[row["unit_id"].strip()] = int(row["population"])
    return census


def _labelled(posts: Iterable[MicroPost], level: Level, h: LocationHierarchy):
    for p in posts:
        lab = location_label(p, level, h)
        if lab is not None:
            yield p, lab


# -- hashtags ---------------------------------------------------------------

@dataclass
class HashtagReport:
    level: Level
    top_k: int
    min_distinct_tweets: int
    rankings: dict[str, list[tuple[str, float]]]
    distinct_tweets: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "level": self.level.value,
            "top_k": self.top_k,
            "min_distinct_tweets": self.min_distinct_tweets,
            "rankings": {
                loc: [{"hashtag": t, "score": s, "tweets": self.distinct_tweets[t]} for t, s in ranked]
                for loc, ranked in self.rankings.items()
            },
        }

    def rows(self) -> list[dict]:
        return [
            {"location": loc, "rank": r, "hashtag": t, "score": s, "tweets": self.distinct_tweets[t]}
            for loc, ranked in self.rankings.items()
            for r, (t, s) in enumerate(ranked, start=1)
        ]


def discriminative_hashtags(
    posts: Sequence[MicroPost],
    level,
    hierarchy: LocationHierarchy,
    top_k: int = 3,
    min_distinct_tweets: int = 5,
) -> HashtagReport:
    """Top hashtags per location by TF-IDF over hashtag-only location documents.

    Hashtags used in fewer than ``min_distinct_tweets`` posts are never
    reported; neither are hashtags with zero weight.
    """
    level = Level.parse(level)
    docs: dict[str, Counter] = defaultdict(Counter)
    distinct: Counter = Counter()
    for p, lab in _labelled(posts, level, hierarchy):
        tags = {t: c for t, c in p.token_counts.items() if t.startswith("#")}
        docs[lab].update(tags)
        distinct.update(tags.keys())
    locations = sorted(docs)
    rankings: dict[str, list[tuple[str, float]]] = {loc: [] for loc in locations}
    nonempty = [loc for loc in locations if docs[loc]]
    if nonempty:
        model = vsm.fit([docs[loc] for loc in nonempty])
        vocab = model.vocabulary
        for loc in nonempty:
            vec = vsm.transform(model, docs[loc])
            scored = [
                (vocab.term(i), float(w))
                for i, w in zip(vec.indices.tolist(), vec.weights.tolist())
                if distinct[vocab.term(i)] >= min_distinct_tweets
            ]
            scored.sort(key=lambda x: (-x[1], x[0]))
            rankings[loc] = scored[:top_k]
    return HashtagReport(level, top_k, min_distinct_tweets, rankings, dict(distinct))


# -- population -------------------------------------------------------------

def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson r, or None when either variable is constant or n < 2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    xm = x - x.mean()
    ym = y - y.mean()
    denom = math.sqrt(float(np.dot(xm, xm)) * float(np.dot(ym, ym)))
    if denom == 0:  # spread lost to underflow
        return None
    r = float(np.dot(xm, ym)) / denom
    return max(-1.0, min(1.0, r))


def pearson_pvalue(r: float, n: int) -> Optional[float]:
    """Two-tailed p-value from the t approximation with n - 2 degrees of freedom."""
    if n < 3:
        return None
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


@dataclass
class PopulationReport:
    rows: list[dict]
    r: Optional[float]
    p_value: Optional[float]
    n_correlated: int
    per_1000_mean: float
    per_1000_std: float
    excluded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pearson_log": {"r": self.r, "p_value": self.p_value, "n": self.n_correlated},
            "accounts_per_1000": {"mean": self.per_1000_mean, "std": self.per_1000_std},
            "excluded_zero_accounts": self.excluded,
            "locations": self.rows,
        }


def account_locations(posts: Iterable[MicroPost], level, hierarchy: LocationHierarchy) -> dict[str, int]:
    """Distinct authors per unit at ``level`` (every unit listed, zeros included)."""
    level = Level.parse(level)
    authors: dict[str, set] = {u.id: set() for u in hierarchy.units_at(level)}
    for p, lab in _labelled(posts, level, hierarchy):
        authors[lab].add(p.author_id)
    return {loc: len(a) for loc, a in authors.items()}


def population_correlation(account_counts: Mapping[str, int], census: Mapping[str, int]) -> PopulationReport:
    """Correlate log population with log account counts per location.

    Locations without accounts are listed but left out of the correlation.
    Fewer than 3 usable locations, or a constant axis, gives ``r = None``.
    """
    missing = sorted(loc for loc, n in account_counts.items() if n > 0 and loc not in census)
    if missing:
        raise ValueError(f"census lacks locations with accounts: {', '.join(missing)}")
    rows, logs, excluded = [], [], []
    for loc in sorted(account_counts):
        n = int(account_counts[loc])
        pop = census.get(loc)
        if pop is None:
            continue
        rate = 1000.0 * n / pop if pop > 0 else float("nan")
        rows.append({"location": loc, "population": int(pop), "accounts": n, "accounts_per_1000": rate})
        if n > 0 and pop > 0:
            logs.append((math.log(pop), math.log(n)))
        else:
            excluded.append(loc)
    if excluded:
        logger.info("excluded from log correlation (zero accounts or population): %s", ", ".join(excluded))
    r = p = None
    if len(logs) >= 3:
        r = pearson([a for a, _ in logs], [b for _, b in logs])
        if r is not None:
            p = pearson_pvalue(r, len(logs))
    rates = [row["accounts_per_1000"] for row in rows if not math.isnan(row["accounts_per_1000"])]
    mean = float(np.mean(rates)) if rates else float("nan")
    std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
    return PopulationReport(rows, r, p, len(logs), mean, std, excluded)


# -- activity ---------------------------------------------------------------

def _median(sorted_vals: Sequence[float]) -> float:
    n = len(sorted_vals)
    mid = n // 2
    if n % 2:
        return float(sorted_vals[mid])
    return (sorted_vals[mid - 1] + sorted_vals[mid]) / 2.0


def quartiles(values: Iterable[float]) -> tuple[float, float, float, float, float]:
    """(min, Q1, median, Q3, max); odd-length halves include the median."""
    s = sorted(values)
    if not s:
        raise ValueError("quartiles of an empty sample")
    n = len(s)
    half = n // 2
    lower = s[: half + 1] if n % 2 else s[:half]
    upper = s[half:]
    if n == 1:
        lower = upper = s
    return float(s[0]), _median(lower), _median(s), _median(upper), float(s[-1])


@dataclass
class LocationActivity:
    location: str
    n_accounts: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float
    std: float
    outliers: list[str]

    @property
    def upper_fence(self) -> float:
        return self.q3 + 1.5 * (self.q3 - self.q1)


@dataclass
class ActivityReport:
    level: Level
    locations: list[LocationActivity]
    global_mean: float
    global_std: float
    global_median: float
    n_accounts: int

    def to_dict(self) -> dict:
        return {
            "level": self.level.value,
            "global": {"mean": self.global_mean, "std": self.global_std, "median": self.global_median,
                       "accounts": self.n_accounts},
            "locations": [self.row(a) for a in self.locations],
        }

    @staticmethod
    def row(a: LocationActivity) -> dict:
        return {
            "location": a.location, "accounts": a.n_accounts, "min": a.minimum, "q1": a.q1,
            "median": a.median, "q3": a.q3, "max": a.maximum, "mean": a.mean, "std": a.std,
            "n_outliers": len(a.outliers),
        }

    def rows(self) -> list[dict]:
        return [self.row(a) for a in self.locations]


def _std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def activity_stats(posts: Sequence[MicroPost], level, hierarchy: LocationHierarchy) -> ActivityReport:
    """Posts-per-account distribution per location, boxplot style.

    Accounts whose count exceeds ``Q3 + 1.5 IQR`` are listed as outliers.
    Global figures cover every author in ``posts``.
    """
    level = Level.parse(level)
    per_author = Counter(p.author_id for p in posts)
    by_loc: dict[str, set] = defaultdict(set)
    for p, lab in _labelled(posts, level, hierarchy):
        by_loc[lab].add(p.author_id)
    out = []
    for loc in sorted(by_loc):
        authors = sorted(by_loc[loc])
        counts = [per_author[a] for a in authors]
        mn, q1, med, q3, mx = quartiles(counts)
        fence = q3 + 1.5 * (q3 - q1)
        out.append(LocationActivity(
            loc, len(authors), mn, q1, med, q3, mx, float(np.mean(counts)), _std(counts),
            [a for a, c in zip(authors, counts) if c > fence],
        ))
    all_counts = list(per_author.values())
    return ActivityReport(
        level,
        out,
        float(np.mean(all_counts)) if all_counts else float("nan"),
        _std(all_counts),
        _median(sorted(all_counts)) if all_counts else float("nan"),
        len(all_counts),
    )


# -- time series ------------------------------------------------------------

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass
class TimeSeries:
    locations: list[str]
    start: Optional[datetime]
    bin_width: timedelta
    counts: np.ndarray  # locations x bins

    @property
    def n_bins(self) -> int:
        return self.counts.shape[1] if self.counts.ndim == 2 else 0

    def bin_starts(self) -> list[datetime]:
        return [self.start + i * self.bin_width for i in range(self.n_bins)]

    def to_dict(self) -> dict:
        return {
            "bin_width_seconds": int(self.bin_width.total_seconds()),
            "bins": [format_timestamp(b) for b in self.bin_starts()],
            "series": {loc: self.counts[i].tolist() for i, loc in enumerate(self.locations)},
        }

    def rows(self) -> list[dict]:
        starts = [format_timestamp(b) for b in self.bin_starts()]
        return [
            {"location": loc, "bin_start": starts[j], "count": int(self.counts[i, j])}
            for i, loc in enumerate(self.locations)
            for j in range(self.n_bins)
        ]

    def to_svg(self, cell: int = 8, label_width: int = 90, normalize: str = "row") -> str:
        """Heat map, one row per location; darker cells hold more posts.

        ``normalize="row"`` shades each row against its own maximum,
        ``"global"`` against the overall maximum.
        """
        n_rows, n_cols = len(self.locations), self.n_bins
        width, height = label_width + n_cols * cell, max(1, n_rows) * cell + 2
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        ]
        global_max = self.counts.max() if self.counts.size else 0
        for i, loc in enumerate(self.locations):
            y = i * cell
            parts.append(f'<text x="2" y="{y + cell - 1}" font-size="{cell}" '
                         f'font-family="monospace">{escape(loc)}</text>')
            top = self.counts[i].max() if normalize == "row" else global_max
            for j in range(n_cols):
                c = int(self.counts[i, j])
                if c == 0 or top == 0:
                    continue
                shade = int(round(255 * (1 - c / top)))
                parts.append(f'<rect x="{label_width + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                             f'fill="#{shade:02x}{shade:02x}{shade:02x}"/>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def time_series(
    posts: Sequence[MicroPost],
    level,
    hierarchy: LocationHierarchy,
    bin_width: timedelta = timedelta(minutes=10),
) -> TimeSeries:
    """Post counts per location in half-open ``[t, t + width)`` bins.

    Bins are aligned to multiples of ``bin_width`` since the Unix epoch.
    """
    level = Level.parse(level)
    if bin_width <= timedelta(0):
        raise ValueError("bin_width must be positive")
    labelled = list(_labelled(posts, level, hierarchy))
    if not labelled:
        return TimeSeries([], None, bin_width, np.zeros((0, 0), dtype=np.int64))
    w = bin_width.total_seconds()
    secs = np.asarray([(p.timestamp - _EPOCH).total_seconds() for p, _ in labelled])
    bins = np.floor(secs / w).astype(np.int64)
    first = int(bins.min())
    bins -= first
    locations = sorted({lab for _, lab in labelled})
    row = {loc: i for i, loc in enumerate(locations)}
    counts = np.zeros((len(locations), int(bins.max()) + 1), dtype=np.int64)
    np.add.at(counts, ([row[lab] for _, lab in labelled], bins), 1)
    return TimeSeries(locations, _EPOCH + timedelta(seconds=first * w), bin_width, counts)


# -- coverage ---------------------------------------------------------------

COVERAGE_CATEGORIES = ("country", "region", "province", "municipality", "empty", "n/a")


@dataclass
class CoverageReport:
    users: dict[str, int]
    tweets: dict[str, int]

    def rows(self) -> list[dict]:
        nu, nt = sum(self.users.values()), sum(self.tweets.values())
        return [
            {
                "level": cat,
                "users": self.users[cat],
                "users_pct": round(100.0 * self.users[cat] / nu, 1) if nu else 0.0,
                "tweets": self.tweets[cat],
                "tweets_pct": round(100.0 * self.tweets[cat] / nt, 1) if nt else 0.0,
            }
            for cat in COVERAGE_CATEGORIES
        ]

    def to_dict(self) -> dict:
        return {"levels": self.rows()}


def coverage(posts: Sequence[MicroPost], names: NameIndex) -> CoverageReport:
    """Accounts and posts (reposts included) by the level their profile resolves to.

    An account uses the profile text of its first post. Empty profiles are
    ``empty``; non-empty ones that do not resolve are ``n/a``.
    """
    profile: dict[str, Optional[str]] = {}
    tweets_by_author: Counter = Counter()
    for p in posts:
        profile.setdefault(p.author_id, p.profile_location)
        tweets_by_author[p.author_id] += 1
    users = {cat: 0 for cat in COVERAGE_CATEGORIES}
    tweets = {cat: 0 for cat in COVERAGE_CATEGORIES}
    for author, text in profile.items():
        if not text or not text.strip():
            cat = "empty"
        else:
            loc = resolve(text, names)
            cat = loc.level.value if loc is not None else "n/a"
        users[cat] += 1
        tweets[cat] += tweets_by_author[author]
    return CoverageReport(users, tweets)
