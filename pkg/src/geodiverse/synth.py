"""Synthetic micro-post corpora with planted per-location vocabularies.

Regions get Zipf-distributed populations and users; each province owns a
local vocabulary, and every token is drawn from the author's local
vocabulary with probability ``mixing`` (otherwise from a shared one).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Union

import numpy as np

from geodiverse.corpus import MicroPost, attach_locations, write_posts
from geodiverse.gazetteer import Level, LocationHierarchy, NameIndex, load_hierarchy, write_hierarchy_csv

EVENT_START = datetime(2012, 10, 28, 10, 0, tzinfo=timezone.utc)
EVENT_HOURS = 14
# template formats a synthetic author may use for a municipality profile
_PROFILE_FORMATS = ("{m}", "{m}, {p}", "{m}, {c}", "{m} de {c}")
_FOREIGN_PLACES = ("New York", "Buenos Aires", "Madrid", "Lima", "Atlantis")


@dataclass(frozen=True)
class SynthConfig:
    n_locations: int = 10
    provinces_per_location: int = 2
    municipalities_per_province: int = 2
    zipf_s: float = 1.0
    n_users: int = 1000
    mean_posts_per_user: float = 4.0
    shared_vocab_size: int = 20000
    local_vocab_size: int = 200
    mixing: float = 0.3
    hashtag_fraction: float = 0.1
    min_tokens: int = 4
    max_tokens: int = 10
    term_zipf: float = 1.0
    repost_fraction: float = 0.0
    reply_fraction: float = 0.0
    empty_profile_fraction: float = 0.0
    foreign_profile_fraction: float = 0.0
    base_population: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_locations", "provinces_per_location", "municipalities_per_province", "n_users",
                     "shared_vocab_size", "local_vocab_size", "min_tokens", "base_population"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_tokens < self.min_tokens:
            raise ValueError("max_tokens must be >= min_tokens")
        if self.zipf_s < 0 or self.term_zipf < 0:
            raise ValueError("Zipf exponents must be >= 0")
        if self.mean_posts_per_user < 1:
            raise ValueError("mean_posts_per_user must be >= 1")
        for name in ("mixing", "hashtag_fraction", "repost_fraction", "reply_fraction",
                     "empty_profile_fraction", "foreign_profile_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.empty_profile_fraction + self.foreign_profile_fraction > 1:
            raise ValueError("empty and foreign profile fractions exceed 1")


@dataclass
class SyntheticCorpus:
    posts: list[MicroPost]
    hierarchy: LocationHierarchy
    census: dict[str, int]
    config: SynthConfig
    local_vocab: dict[str, list[str]] = field(default_factory=dict)  # province id -> terms
    shared_vocab: list[str] = field(default_factory=list)

    def write(self, directory: Union[str, os.PathLike]) -> dict[str, Path]:
        """Emit ``posts.jsonl``, ``hierarchy.csv`` and ``census.csv``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"posts": out / "posts.jsonl", "hierarchy": out / "hierarchy.csv", "census": out / "census.csv"}
        write_posts(self.posts, paths["posts"])
        write_hierarchy_csv(self.hierarchy, paths["hierarchy"])
        with open(paths["census"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["unit_id", "population"])
            for unit_id, pop in self.census.items():
                writer.writerow([unit_id, pop])
        return paths


def zipf_weights(n: int, s: float) -> np.ndarray:
    """Unnormalized weights ``1 / rank**s`` for ranks 1..n."""
    return 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s


def apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    quota = total * weights / weights.sum()
    out = np.floor(quota).astype(np.int64)
    rest = total - out.sum()
    order = np.argsort(-(quota - out), kind="stable")
    out[order[:rest]] += 1
    return out


def _hierarchy_rows(cfg: SynthConfig) -> list[dict]:
    rows = [{"id": "C", "name": "Synthland", "level": "country", "parent_id": ""}]
    for r in range(1, cfg.n_locations + 1):
        rid = f"R{r:02d}"
        rows.append({"id": rid, "name": f"Region {r:02d}", "level": "region", "parent_id": "C"})
        for p in range(1, cfg.provinces_per_location + 1):
            pid = f"{rid}P{p}"
            rows.append({"id": pid, "name": f"Provincia {r:02d}-{p}", "level": "province", "parent_id": rid})
            for m in range(1, cfg.municipalities_per_province + 1):
                rows.append({"id": f"{pid}M{m}", "name": f"Comuna {r:02d}-{p}-{m}",
                             "level": "municipality", "parent_id": pid})
    return rows


def _vocabulary(prefix: str, size: int, hashtag_fraction: float, rng: np.random.Generator) -> list[str]:
    n_tags = int(round(hashtag_fraction * size))
    tags: set[int] = set()
    if n_tags:
        # the most frequent term is a hashtag (event or place tag), the rest are random
        tags = {0} | set((1 + rng.choice(size - 1, size=n_tags - 1, replace=False)).tolist())
    width = len(str(size - 1))
    return [("#" if i in tags else "") + f"{prefix}{i:0{width}d}" for i in range(size)]


def _split_even(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def generate(config: SynthConfig) -> SyntheticCorpus:
    """Deterministic corpus, hierarchy and census for ``config``."""
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    vocab_seq, user_seq = root.spawn(2)
    vocab_rng = np.random.default_rng(vocab_seq)

    h = load_hierarchy(_hierarchy_rows(cfg))
    regions = h.units_at(Level.REGION)
    weights = zipf_weights(cfg.n_locations, cfg.zipf_s)

    census: dict[str, int] = {}
    region_pop = np.rint(cfg.base_population * weights / weights.sum()).astype(np.int64)
    for region, pop in zip(regions, region_pop):
        census[region.id] = int(pop)
        provinces = sorted(h.children(region.id), key=lambda u: u.id)
        for prov, ppop in zip(provinces, _split_even(int(pop), len(provinces))):
            census[prov.id] = ppop
            munis = sorted(h.children(prov.id), key=lambda u: u.id)
            for muni, mpop in zip(munis, _split_even(ppop, len(munis))):
                census[muni.id] = mpop
    census[h.country.id] = int(region_pop.sum())

    shared = _vocabulary("w", cfg.shared_vocab_size, cfg.hashtag_fraction, vocab_rng)
    local = {
        prov.id: _vocabulary(prov.id.lower() + "t", cfg.local_vocab_size, cfg.hashtag_fraction, vocab_rng)
        for prov in h.units_at(Level.PROVINCE)
    }
    shared_p = zipf_weights(len(shared), cfg.term_zipf)
    shared_p /= shared_p.sum()
    local_p = zipf_weights(cfg.local_vocab_size, cfg.term_zipf)
    local_p /= local_p.sum()

    # users per municipality
    homes: list[str] = []
    for region, n in zip(regions, apportion(cfg.n_users, weights)):
        munis = [m for prov in sorted(h.children(region.id), key=lambda u: u.id)
                 for m in sorted(h.children(prov.id), key=lambda u: u.id)]
        homes.extend(munis[i % len(munis)].id for i in range(int(n)))

    posts: list[MicroPost] = []
    window = EVENT_HOURS * 3600
    for u, (home, seq) in enumerate(zip(homes, user_seq.spawn(len(homes)))):
        rng = np.random.default_rng(seq)
        author = f"u{u:05d}"
        lineage = h.lineage(home)
        prov_id = lineage[Level.PROVINCE].id
        roll = rng.random()
        if roll < cfg.empty_profile_fraction:
            profile = ""
        elif roll < cfg.empty_profile_fraction + cfg.foreign_profile_fraction:
            profile = _FOREIGN_PLACES[int(rng.integers(len(_FOREIGN_PLACES)))]
        else:
            fmt = _PROFILE_FORMATS[int(rng.integers(len(_PROFILE_FORMATS)))]
            profile = fmt.format(m=lineage[Level.MUNICIPALITY].name, p=lineage[Level.PROVINCE].name,
                                 c=lineage[Level.COUNTRY].name)
        n_posts = int(rng.geometric(1.0 / cfg.mean_posts_per_user))
        offsets = np.sort(rng.integers(0, window, size=n_posts))
        for offset in offsets:
            n_tok = int(rng.integers(cfg.min_tokens, cfg.max_tokens + 1))
            is_local = rng.random(n_tok) < cfg.mixing
            loc_idx = rng.choice(cfg.local_vocab_size, size=n_tok, p=local_p)
            sh_idx = rng.choice(len(shared), size=n_tok, p=shared_p)
            words = [local[prov_id][li] if flag else shared[si] for flag, li, si in zip(is_local, loc_idx, sh_idx)]
            is_repost = bool(rng.random() < cfg.repost_fraction)
            reply_to = None
            if posts and rng.random() < cfg.reply_fraction:
                reply_to = posts[int(rng.integers(len(posts)))].id
            posts.append(MicroPost(
                id=f"p{len(posts):07d}",
                author_id=author,
                text=" ".join(words),
                timestamp=EVENT_START + timedelta(seconds=int(offset)),
                is_repost=is_repost,
                reply_to=reply_to,
                profile_location=profile,
            ))

    posts.sort(key=lambda p: (p.timestamp, p.id))
    posts = attach_locations(posts, NameIndex.build(h))
    return SyntheticCorpus(posts, h, census, cfg, local, shared)
