import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geodiverse.analytics import (
    activity_stats,
    account_locations,
    coverage,
    discriminative_hashtags,
    pearson,
    pearson_pvalue,
    population_correlation,
    quartiles,
    read_census,
    time_series,
)
from geodiverse.gazetteer import Level, NameIndex

from conftest import make_post

LOC_MUNI = {"P-SCL": "M-NUN", "P-COR": "M-PTE", "P-IQQ": "M-IQQ"}


def _tagged(spec):
    """spec maps province -> list of (hashtag, n_posts); every post carries one hashtag plus filler."""
    posts = []
    for prov, tags in spec.items():
        for tag, n in tags:
            for i in range(n):
                posts.append(make_post(f"{prov}-{tag}-{i}", f"{prov}-u{i % 3}", f"texto {tag}", LOC_MUNI[prov]))
    return posts


def test_hashtag_table(chile):
    posts = _tagged({
        "P-SCL": [("#a1", 6), ("#ab", 5), ("#shared", 5)],
        "P-COR": [("#b1", 5), ("#ab", 3), ("#shared", 5)],
        "P-IQQ": [("#c1", 7), ("#rare", 4), ("#shared", 5)],
    })
    report = discriminative_hashtags(posts, Level.PROVINCE, chile, top_k=3, min_distinct_tweets=5)
    expected = {
        "P-SCL": [("#a1", 6 * math.log(3)), ("#ab", 5 * math.log(1.5))],
        "P-COR": [("#b1", 5 * math.log(3)), ("#ab", 3 * math.log(1.5))],
        "P-IQQ": [("#c1", 7 * math.log(3))],
    }
    assert set(report.rankings) == set(expected)
    for loc, ranked in expected.items():
        got = report.rankings[loc]
        assert [t for t, _ in got] == [t for t, _ in ranked]
        assert [s for _, s in got] == pytest.approx([s for _, s in ranked], abs=1e-12)
    assert len(report.rows()) == 5


def test_hashtag_dominant_single_location(chile):
    posts = _tagged({"P-SCL": [("#solo", 50), ("#x", 6)], "P-COR": [("#x", 6)], "P-IQQ": [("#y", 5)]})
    report = discriminative_hashtags(posts, "province", chile)
    assert report.rankings["P-SCL"][0][0] == "#solo"


def test_hashtags_no_words(chile):
    posts = [make_post(i, "u", "palabra comun", "M-NUN") for i in range(6)]
    report = discriminative_hashtags(posts, "province", chile)
    assert report.rankings == {"P-SCL": []}


def closed_form_pearson(x, y):
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxy = sum(a * b for a, b in zip(x, y))
    sxx = sum(a * a for a in x)
    syy = sum(b * b for b in y)
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def test_pearson_oracle():
    x = [2.0, 4.0, 5.0, 9.0, 11.0]
    y = [1.5, 3.9, 4.2, 7.7, 12.0]
    assert pearson(x, y) == pytest.approx(closed_form_pearson(x, y), abs=1e-12)


def test_pearson_degenerate():
    assert pearson([1, 2, 3], [5, 5, 5]) is None
    assert pearson([1], [2]) is None
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pearson([1, 2], [1])


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=20),
    st.floats(0.1, 100),
    st.floats(-100, 100),
    st.integers(0, 2**31),
)
def test_pearson_bounds_and_affine(x, a, b, seed):
    y = np.random.default_rng(seed).normal(size=len(x)).tolist()
    r = pearson(x, y)
    if r is None:
        return
    assert abs(r) <= 1 + 1e-12
    r2 = pearson([a * v + b for v in x], y)
    if r2 is not None and np.ptp(x) > 1e-6 * max(1.0, np.max(np.abs(x))):
        assert r2 == pytest.approx(r, abs=1e-6)


def test_pvalue():
    assert pearson_pvalue(0.5, 2) is None
    assert pearson_pvalue(1.0, 10) == 0.0
    assert 0 < pearson_pvalue(0.3, 20) < 1


def test_population_proportional():
    census = {"A": 1000, "B": 5000, "C": 20000, "D": 80000}
    report = population_correlation({k: v // 100 for k, v in census.items()}, census)
    assert report.r == pytest.approx(1.0)
    assert report.n_correlated == 4


def test_population_constant_accounts():
    census = {"A": 1000, "B": 5000, "C": 20000}
    assert population_correlation({"A": 7, "B": 7, "C": 7}, census).r is None


def test_population_per_thousand():
    census = {"A": 100_000, "B": 200_000, "C": 400_000}
    report = population_correlation({"A": 250, "B": 420, "C": 1000}, census)
    assert report.per_1000_mean == pytest.approx(7.1 / 3, abs=1e-12)
    assert report.per_1000_std == pytest.approx(math.sqrt(0.16 / 3), abs=1e-12)


def test_population_zero_and_missing():
    census = {"A": 10, "B": 20, "C": 30, "D": 40}
    report = population_correlation({"A": 1, "B": 2, "C": 4, "D": 0}, census)
    assert report.excluded == ["D"] and report.n_correlated == 3
    assert population_correlation({"A": 1, "B": 2}, census).r is None
    with pytest.raises(ValueError, match="Z"):
        population_correlation({"Z": 3}, census)


def test_account_locations(chile, toy_posts):
    assert account_locations(toy_posts, "province", chile) == {"P-COR": 1, "P-IQQ": 2, "P-SCL": 2}


def test_read_census(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("unit_id,population\nA,10\nB, 20\n", encoding="utf-8")
    assert read_census(path) == {"A": 10, "B": 20}


def test_quartiles_examples():
    assert quartiles([7]) == (7, 7, 7, 7, 7)
    assert quartiles([1, 1, 2, 3, 5])[2] == 2
    assert quartiles([1, 2, 3, 4]) == (1, 1.5, 2.5, 3.5, 4)


def sort_oracle(values):
    s = sorted(values)
    n = len(s)

    def med(v):
        m = len(v)
        return v[m // 2] if m % 2 else (v[m // 2 - 1] + v[m // 2]) / 2

    if n % 2:
        lower, upper = s[: n // 2 + 1], s[n // 2 :]
    else:
        lower, upper = s[: n // 2], s[n // 2 :]
    return s[0], med(lower), med(s), med(upper), s[-1]


def test_quartiles_sort_oracle():
    rng = np.random.default_rng(5)
    for n in (100, 101):
        vals = rng.geometric(0.2, size=n).tolist()
        assert quartiles(vals) == pytest.approx(sort_oracle(vals))


def test_activity(chile, toy_posts):
    report = activity_stats(toy_posts, Level.PROVINCE, chile)
    by_loc = {a.location: a for a in report.locations}
    assert by_loc["P-COR"].median == 3 and by_loc["P-COR"].n_accounts == 1
    assert by_loc["P-SCL"].mean == 2
    assert report.global_median == 2 and report.n_accounts == 5
    assert all(a.q1 <= a.median <= a.q3 for a in report.locations)


def test_activity_outliers(chile):
    posts = []
    for author, n in [("a", 1), ("b", 1), ("c", 2), ("d", 2), ("e", 40)]:
        posts += [make_post(f"{author}{i}", author, "x", "M-NUN") for i in range(n)]
    (loc,) = activity_stats(posts, "province", chile).locations
    assert loc.outliers == ["e"]


def test_time_series_bins(chile):
    posts = [make_post(i, "u", "x", "M-NUN", minutes=m) for i, m in enumerate([1, 5, 11])]
    ts = time_series(posts, "region", chile)
    assert ts.locations == ["RM"]
    assert ts.counts.tolist() == [[2, 1]]
    assert ts.start == datetime(2012, 10, 28, 10, 0, tzinfo=timezone.utc)
    assert ts.to_svg().startswith("<svg")


def test_time_series_empty(chile):
    ts = time_series([], "region", chile)
    assert ts.n_bins == 0 and ts.locations == []


def test_time_series_conservation(chile):
    rng = np.random.default_rng(8)
    munis = ["M-NUN", "M-PTE", "M-IQQ", "M-AHO"]
    posts = [make_post(i, "u", "x", munis[int(rng.integers(4))], minutes=float(rng.uniform(0, 840)))
             for i in range(1000)]
    ts = time_series(posts, "province", chile, bin_width=timedelta(minutes=10))
    assert ts.counts.sum() == 1000
    totals = {"P-SCL": 0, "P-COR": 0, "P-IQQ": 0}
    for p in posts:
        totals[chile.ancestor(p.author_location.unit_id, Level.PROVINCE).id] += 1
    assert {loc: int(ts.counts[i].sum()) for i, loc in enumerate(ts.locations)} == totals
    assert len(ts.rows()) == 3 * ts.n_bins


def test_coverage(chile):
    profiles = ["Ñuñoa", "Chile", "", "Lima", "Tarapacá", "Santiago", None]
    posts = []
    for i, prof in enumerate(profiles):
        posts += [make_post(f"{i}-{j}", f"a{i}", "x", profile_location=prof) for j in range(i + 1)]
    report = coverage(posts, NameIndex.build(chile))
    assert report.users == {"country": 1, "region": 1, "province": 1, "municipality": 1, "empty": 2, "n/a": 1}
    assert report.tweets["empty"] == 3 + 7
    assert sum(report.tweets.values()) == len(posts)
    assert sum(r["users_pct"] for r in report.rows()) == pytest.approx(100, abs=0.5)
