"""Micro-post ingestion, tokenization and document grouping."""

from __future__ import annotations

import enum
import io
import json
import logging
import math
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterable, Optional, Sequence, Union

from geodiverse.gazetteer import Level, LocationHierarchy, NameIndex, ResolvedLocation, resolve

logger = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.10


class IngestError(ValueError):
    pass


class GroupingError(ValueError):
    pass


class TokenKind(enum.Enum):
    WORD = "word"
    HASHTAG = "hashtag"


@dataclass(frozen=True)
class Token:
    surface: str
    kind: TokenKind

    @classmethod
    def of(cls, surface: str) -> "Token":
        kind = TokenKind.HASHTAG if surface.startswith("#") else TokenKind.WORD
        return cls(surface, kind)


_URL = re.compile(r"(?:https?://|www\.)\S+")
_MENTION = re.compile(r"@\w+")
_TOKEN = re.compile(r"#\w+|\w+(?:['’-]\w+)*")


def tokenize(text: str) -> list[Token]:
    """Lowercase NFC tokens; hashtags keep their ``#``, mentions and URLs are dropped."""
    return [Token.of(s) for s in token_surfaces(text)]


def token_surfaces(text: str) -> list[str]:
    if not text:
        return []
    text = unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).lower())
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    return _TOKEN.findall(text)


@dataclass(frozen=True)
class MicroPost:
    id: str
    author_id: str
    text: str
    timestamp: datetime
    is_repost: bool = False
    reply_to: Optional[str] = None
    author_location: Optional[ResolvedLocation] = None
    profile_location: Optional[str] = None
    lat: Optional[float] = None
    lon: Optional[float] = None

    @cached_property
    def token_counts(self) -> Counter:
        return Counter(token_surfaces(self.text))

    @cached_property
    def hashtags(self) -> frozenset[str]:
        return frozenset(t for t in self.token_counts if t.startswith("#"))

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "author_id": self.author_id,
            "text": self.text,
            "timestamp": format_timestamp(self.timestamp),
            "is_repost": self.is_repost,
        }
        if self.reply_to is not None:
            rec["reply_to"] = self.reply_to
        if self.profile_location is not None:
            rec["author_profile_location"] = self.profile_location
        if self.lat is not None and self.lon is not None:
            rec["lat"] = self.lat
            rec["lon"] = self.lon
        return rec


def parse_timestamp(value: str) -> datetime:
    """RFC 3339 instant, returned as an aware UTC datetime."""
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {value!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_record(line: str) -> MicroPost:
    rec = json.loads(line)
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    for key in ("id", "author_id", "text", "timestamp"):
        if key not in rec or rec[key] is None:
            raise ValueError(f"missing {key!r}")
    text = rec["text"]
    if not isinstance(text, str) or not text.strip():
        raise ValueError("empty text")
    is_repost = rec.get("is_repost", False)
    if not isinstance(is_repost, bool):
        raise ValueError("is_repost must be a boolean")
    reply_to = rec.get("reply_to")
    lat, lon = rec.get("lat"), rec.get("lon")
    return MicroPost(
        id=str(rec["id"]),
        author_id=str(rec["author_id"]),
        text=text,
        timestamp=parse_timestamp(rec["timestamp"]),
        is_repost=is_repost,
        reply_to=str(reply_to) if reply_to is not None else None,
        profile_location=rec.get("author_profile_location"),
        lat=float(lat) if lat is not None else None,
        lon=float(lon) if lon is not None else None,
    )


def ingest(source: Union[str, os.PathLike, Iterable[str]]) -> list[MicroPost]:
    """Read JSON-lines posts from a path or an iterable of lines.

    Malformed lines and duplicate ids are skipped with a warning. More than
    10% malformed lines raises IngestError.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    elif isinstance(source, io.IOBase):
        lines = source.readlines()
    else:
        lines = list(source)

    posts: list[MicroPost] = []
    seen: set[str] = set()
    n_records = 0
    malformed: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        n_records += 1
        try:
            post = _parse_record(line)
        except (ValueError, TypeError) as exc:
            logger.warning("line %d: skipped malformed record (%s)", lineno, exc)
            malformed.append(lineno)
            continue
        if post.id in seen:
            logger.warning("line %d: skipped duplicate id %s", lineno, post.id)
            continue
        seen.add(post.id)
        posts.append(post)

    if n_records and len(malformed) / n_records > MAX_MALFORMED_FRACTION:
        shown = ", ".join(map(str, malformed[:10]))
        raise IngestError(
            f"{len(malformed)} of {n_records} lines malformed (first: {shown}); aborting"
        )
    return posts


def write_posts(posts: Iterable[MicroPost], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for post in posts:
            fh.write(json.dumps(post.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


def attach_locations(posts: Iterable[MicroPost], names: NameIndex) -> list[MicroPost]:
    """Resolve every post's ``profile_location`` into ``author_location``."""
    cache: dict[Optional[str], Optional[ResolvedLocation]] = {}
    out = []
    for post in posts:
        key = post.profile_location
        if key not in cache:
            cache[key] = resolve(key, names)
        out.append(replace(post, author_location=cache[key]))
    return out


def filter_for_training(posts: Iterable[MicroPost]) -> list[MicroPost]:
    """Drop reposts and replies."""
    return [p for p in posts if not p.is_repost and p.reply_to is None]


@dataclass
class Document:
    doc_id: str
    counts: Counter = field(default_factory=Counter)
    n_posts: int = 0

    def add(self, counts: Counter) -> None:
        self.counts.update(counts)
        self.n_posts += 1


class GroupingKind(enum.Enum):
    BY_USER = "user"
    BY_LOCATION = "location"
    BY_HASHTAG = "hashtag"


@dataclass(frozen=True)
class GroupingStrategy:
    kind: GroupingKind
    level: Optional[Level] = None
    top_fraction: float = 0.01
    min_skip: int = 1

    def __post_init__(self):
        if self.kind is GroupingKind.BY_LOCATION and self.level not in (Level.PROVINCE, Level.REGION):
            raise ValueError("ByLocation level must be province or region")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must be in (0, 1]")
        if self.min_skip < 0:
            raise ValueError("min_skip must be >= 0")

    @classmethod
    def by_user(cls) -> "GroupingStrategy":
        return cls(GroupingKind.BY_USER)

    @classmethod
    def by_location(cls, level: Union[Level, str]) -> "GroupingStrategy":
        return cls(GroupingKind.BY_LOCATION, level=Level.parse(level))

    @classmethod
    def by_hashtag(cls, top_fraction: float = 0.01, min_skip: int = 1) -> "GroupingStrategy":
        return cls(GroupingKind.BY_HASHTAG, top_fraction=top_fraction, min_skip=min_skip)


def location_label(post: MicroPost, level: Level, h: LocationHierarchy) -> Optional[str]:
    """Id of the author's unit at ``level``, or None if the author is coarser or unknown."""
    if post.author_location is None:
        return None
    unit = h.ancestor(post.author_location.unit_id, level)
    return unit.id if unit is not None else None


def hashtag_frequencies(counts: Iterable[Counter]) -> Counter:
    """Number of posts mentioning each hashtag."""
    freq: Counter = Counter()
    for c in counts:
        freq.update(t for t in c if t.startswith("#"))
    return freq


def retained_hashtags(freq: Counter, top_fraction: float, skip: int = 1) -> list[str]:
    """Rank by post frequency (ties lexicographic), drop the ``skip`` most frequent, keep the top fraction.

    The kept count is ``floor(top_fraction * n_distinct)``, at least one.
    """
    if not freq:
        raise GroupingError("no hashtags in corpus")
    ranked = sorted(freq, key=lambda t: (-freq[t], t))
    n_keep = max(1, math.floor(top_fraction * len(ranked) + 1e-9))
    kept = ranked[skip : skip + n_keep]
    if not kept:
        raise GroupingError(f"no hashtags left after skipping the top {skip}")
    return kept


def group_counts(
    counts: Sequence[Counter],
    keys: Sequence[Optional[str]],
) -> list[Document]:
    docs: dict[str, Document] = {}
    for c, key in zip(counts, keys):
        if key is None:
            continue
        doc = docs.get(key)
        if doc is None:
            doc = docs[key] = Document(key)
        doc.add(c)
    return list(docs.values())


def group_by_hashtag(counts: Sequence[Counter], top_fraction: float, skip: int) -> list[Document]:
    freq = hashtag_frequencies(counts)
    kept = retained_hashtags(freq, top_fraction, skip)
    docs = {tag: Document(tag) for tag in kept}
    for c in counts:
        for tag in kept:
            if tag in c:
                docs[tag].add(c)
    return [docs[t] for t in kept]


def group(
    posts: Sequence[MicroPost],
    strategy: GroupingStrategy,
    hierarchy: Optional[LocationHierarchy] = None,
) -> list[Document]:
    """Group posts into bag-of-words documents.

    ByUser keys on the author of every geolocated post; ByLocation maps each
    author up to ``strategy.level`` (authors resolved above that level are
    left out, so ``hierarchy`` is required); ByHashtag builds one document per
    retained hashtag from every post mentioning it.
    """
    counts = [p.token_counts for p in posts]
    if strategy.kind is GroupingKind.BY_USER:
        keys = [p.author_id if p.author_location is not None else None for p in posts]
        return group_counts(counts, keys)
    if strategy.kind is GroupingKind.BY_LOCATION:
        if hierarchy is None:
            raise ValueError("ByLocation grouping needs the location hierarchy")
        keys = [location_label(p, strategy.level, hierarchy) for p in posts]
        return group_counts(counts, keys)
    return group_by_hashtag(counts, strategy.top_fraction, strategy.min_skip)
