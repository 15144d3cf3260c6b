import math
from collections import Counter, defaultdict

import numpy as np
import pytest

from geodiverse.classify import (
    ClassifierSpec,
    LocationIndex,
    ModelFormatError,
    TrainingError,
    Variant,
    diverse_timeline,
    load_index,
    predict,
    predict_baseline,
    predict_many,
    save_index,
    timeline_order,
    train,
)
from geodiverse.corpus import token_surfaces
from geodiverse.gazetteer import Level

from conftest import make_post

PROVINCE_OF = {"M-NUN": "P-SCL", "M-PTE": "P-COR", "M-IQQ": "P-IQQ"}
MUNIS = list(PROVINCE_OF)
CODE = {"M-NUN": "nun", "M-PTE": "pte", "M-IQQ": "iqq"}


@pytest.fixture
def three_locations():
    """12 users (4 per province), each posting 3 texts mixing shared and planted terms."""
    rng = np.random.default_rng(0)
    shared = [f"s{i}" for i in range(30)]
    posts = []
    n = 0
    for u in range(12):
        muni = MUNIS[u % 3]
        local = [f"{CODE[muni]}w{i}" for i in range(8)]
        for _ in range(3):
            words = list(rng.choice(shared, 3)) + list(rng.choice(local, 2)) + [f"#{CODE[muni]}"]
            posts.append(make_post(n, f"user{u}", " ".join(words), muni, minutes=n))
            n += 1
    return posts


def spec(variant, **kw):
    return ClassifierSpec(variant, Level.PROVINCE, **kw)


def test_tfidf_l_three_documents(chile, three_locations):
    index = train(three_locations, spec(Variant.TFIDF_L), chile)
    assert index.n_model_docs == 3
    assert index.references.shape[0] == 3
    assert sorted(index.location_ids) == ["P-COR", "P-IQQ", "P-SCL"]


def test_tfidf_u_twelve_users(chile, three_locations):
    index = train(three_locations, spec(Variant.TFIDF_U), chile)
    assert index.n_model_docs == 12
    assert index.references.shape[0] == 3
    assert index.tfidf.n_docs == 12


def test_tfidf_h_top_percent_of_300(chile):
    # #top in 10 posts, #k1..#k3 in 5 each, 296 singleton hashtags: skip #top, keep 1% of 300 = 3
    posts = []
    for i in range(10):
        tags = ["#top"] + ([f"#k{i % 3 + 1}"] if i < 9 else [])
        posts.append(make_post(f"a{i}", "u1", "hola " + " ".join(tags), MUNIS[i % 3]))
    posts.append(make_post("b0", "u2", "#k1 #k2 #k3", "M-NUN"))
    posts.append(make_post("b1", "u2", "#k1 #k2 #k3", "M-PTE"))
    singles = [f"#x{j:03d}" for j in range(296)]
    for j in range(0, 296, 37):
        posts.append(make_post(f"c{j}", "u3", " ".join(singles[j : j + 37]), MUNIS[j % 3]))
    hashtags = set()
    for p in posts:
        hashtags |= p.hashtags
    assert len(hashtags) == 300
    index = train(posts, spec(Variant.TFIDF_H), chile)
    assert index.n_model_docs == 3
    assert index.tfidf.n_docs == 3


def test_unique_hashtag_query(chile, three_locations):
    for variant in (Variant.TFIDF_L, Variant.TFIDF_U, Variant.LSI_U):
        index = train(three_locations, spec(variant, k=5), chile)
        assert predict(index, "#iqq").chosen == "P-IQQ"
        assert predict(index, "ptew1 ptew2").chosen == "P-COR"


def test_empty_query_is_baseline(chile):
    posts = [make_post(i, f"u{i}", f"w{i % 4} z", "M-IQQ" if i < 5 else "M-NUN") for i in range(8)]
    index = train(posts, spec(Variant.TFIDF_L), chile)
    pred = predict(index, "")
    assert pred.chosen == "P-IQQ" and pred.score == 0.0
    assert predict(index, "unseen words only").chosen == predict_baseline(index).chosen
    assert predict(index, "!!!").ranked == pred.ranked


def test_baseline_argmax_and_tie():
    index = LocationIndex(ClassifierSpec(Variant.BASELINE, Level.PROVINCE), ["B", "A"], np.array([5, 10]))
    assert predict_baseline(index).chosen == "A"
    index = LocationIndex(ClassifierSpec(Variant.BASELINE, Level.PROVINCE), ["B", "A"], np.array([5, 5]))
    assert predict_baseline(index).chosen == "A"
    assert predict(index, "anything").chosen == "A"


def test_training_needs_two_locations(chile):
    posts = [make_post(i, "u", "a b", "M-NUN") for i in range(3)]
    with pytest.raises(TrainingError):
        train(posts, spec(Variant.TFIDF_L), chile)


def test_spec_validation():
    with pytest.raises(ValueError):
        ClassifierSpec(Variant.LSI_U, Level.PROVINCE, k=0)
    with pytest.raises(ValueError):
        ClassifierSpec(Variant.TFIDF_L, Level.MUNICIPALITY)
    s = ClassifierSpec("lsi-u", "region", k=7)
    assert ClassifierSpec.from_dict(s.to_dict()) == s


def brute_force_choices(train_posts, queries, grouping):
    """Exhaustive scorer built from dictionaries: fit IDF on grouped documents, score every location."""
    loc_of = {p.id: PROVINCE_OF[p.author_location.unit_id] for p in train_posts}
    groups = defaultdict(Counter)
    for p in train_posts:
        key = p.author_id if grouping == "user" else loc_of[p.id]
        groups[key].update(token_surfaces(p.text))
    N = len(groups)
    df = Counter()
    for counts in groups.values():
        df.update(set(counts))
    idf = {t: math.log(N / df[t]) for t in df}

    def weigh(counts):
        return {t: c * idf[t] for t, c in counts.items() if t in idf and idf[t] > 0}

    refs = defaultdict(Counter)
    n_tweets = Counter()
    for p in train_posts:
        refs[loc_of[p.id]].update(token_surfaces(p.text))
        n_tweets[loc_of[p.id]] += 1
    ref_w = {loc: weigh(c) for loc, c in refs.items()}

    def cos(a, b):
        dot = sum(w * b.get(t, 0.0) for t, w in a.items())
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
        return dot / (na * nb) if na > 0 and nb > 0 else 0.0

    out = []
    for q in queries:
        qw = weigh(Counter(token_surfaces(q.text)))
        scored = [(cos(qw, ref_w[loc]), loc) for loc in ref_w]
        best = max(s for s, _ in scored)
        tied = [loc for s, loc in scored if abs(s - best) <= 1e-12]
        out.append(min(tied, key=lambda loc: (-n_tweets[loc], loc)))
    return out


def _two_hundred_posts():
    rng = np.random.default_rng(42)
    shared = [f"s{i}" for i in range(40)]
    posts = []
    for i in range(200):
        muni = MUNIS[int(rng.choice(3, p=[0.5, 0.3, 0.2]))]
        local = [f"{CODE[muni]}t{j}" for j in range(15)]
        k = int(rng.integers(1, 6))
        words = list(rng.choice(shared, k)) + list(rng.choice(local, int(rng.integers(0, 3))))
        if rng.random() < 0.1:
            words = ["oov-only"]
        posts.append(make_post(i, f"u{int(rng.integers(0, 25))}", " ".join(words), muni))
    return posts


@pytest.mark.parametrize("variant,grouping", [(Variant.TFIDF_L, "location"), (Variant.TFIDF_U, "user")])
def test_matches_brute_force_scorer(chile, variant, grouping):
    posts = _two_hundred_posts()
    train_posts, held_out = posts[:160], posts[160:]
    index = train(train_posts, spec(variant), chile)
    got = predict_many(index, [q.text for q in held_out])
    assert got == brute_force_choices(train_posts, held_out, grouping)


def test_scale_invariance_and_determinism(chile):
    posts = _two_hundred_posts()
    index = train(posts[:160], spec(Variant.TFIDF_L), chile)
    scaled = LocationIndex(index.spec, index.location_ids, index.tweet_counts, index.tfidf, None,
                           index.references * 3.7, index.n_model_docs)
    texts = [q.text for q in posts[160:]]
    assert predict_many(index, texts) == predict_many(scaled, texts)
    assert predict(index, texts[0]).ranked == predict(index, texts[0]).ranked


def test_ranked_scores_non_increasing(chile, three_locations):
    pred = predict(train(three_locations, spec(Variant.TFIDF_U), chile), "s1 s2 nunw0")
    scores = [s for _, s in pred.ranked]
    assert scores == sorted(scores, reverse=True)
    assert pred.to_dict()["chosen"] == pred.chosen


def test_separable_accuracy_one(chile):
    posts = []
    for i in range(30):
        muni = MUNIS[i % 3]
        posts.append(make_post(i, f"u{i}", f"{CODE[muni]}a {CODE[muni]}b", muni))
    index = train(posts, spec(Variant.TFIDF_L), chile)
    assert predict_many(index, [p.text for p in posts]) == [PROVINCE_OF[p.author_location.unit_id] for p in posts]


def test_timeline_round_robin():
    labels = list("AAABBBCCC")
    assert "".join(labels[i] for i in timeline_order(labels, 1)) == "ABCABCABC"
    skewed = list("AAAAAABBC")
    assert "".join(skewed[i] for i in timeline_order(skewed, 1)) == "ABCABAAAA"
    assert timeline_order(list("AAAA"), 1) == [0, 1, 2, 3]
    assert "".join(labels[i] for i in timeline_order(labels, 2)) == "AABBCCABC"
    with pytest.raises(ValueError):
        timeline_order(labels, 0)


def test_diverse_timeline(chile, three_locations):
    index = train(three_locations, spec(Variant.TFIDF_L), chile)
    queries = [make_post(f"q{i}", "x", f"{CODE[m]}w{i}", minutes=i) for i, m in enumerate(MUNIS * 2)]
    ordered = diverse_timeline(index, queries, 1)
    assert sorted(p.id for p in ordered) == sorted(p.id for p in queries)
    assert [p.id for p in ordered] == [p.id for p in queries]  # already interleaved


@pytest.mark.parametrize("variant", list(Variant))
def test_save_load_round_trip(chile, three_locations, tmp_path, variant):
    index = train(three_locations, spec(variant, k=4), chile)
    path = tmp_path / "m.bin"
    save_index(index, path)
    again = load_index(path)
    assert again.spec == index.spec and again.location_ids == index.location_ids
    for text in ["nunw1 s3", "", "#iqq"]:
        assert predict(again, text).ranked == predict(index, text).ranked
    save_index(again, tmp_path / "m2.bin")
    assert (tmp_path / "m2.bin").read_bytes() == path.read_bytes()


def test_load_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a zip")
    with pytest.raises(ModelFormatError):
        load_index(path)
