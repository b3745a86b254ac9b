import csv
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permdroid.corpus import (
    BENIGN,
    DEFAULT_RULES,
    MALWARE,
    STANDARD_RULES,
    CorpusRecord,
    ThresholdRule,
    attach_flags,
    dataset_hash,
    flag_histogram,
    label_by_flags,
    partition_by_year,
    read_corpus,
    read_flag_index,
    sample_size,
    stratified_sample,
    synth_drift_corpus,
    synth_flags,
    synth_generate,
    write_corpus,
)
from permdroid.errors import BadMargin, InsufficientClass, MalformedRow, MissingFlags
from oracles import cochran, partition_counts


def rec(i, flags=None, label=None, year=None, text="a b"):
    return CorpusRecord(f"{i:064x}", text, label, flags, year)


# ------------------------------------------------------------------ labeling

def test_rule_0_vs_8():
    rule = ThresholdRule(0, 8)
    labeled, dropped = label_by_flags([rec(1, 0), rec(2, 5), rec(3, 12)], rule)
    assert [(r.id[-1], r.label) for r in labeled] == [("1", BENIGN), ("3", MALWARE)]
    assert dropped == 1


def test_missing_flags():
    with pytest.raises(MissingFlags):
        label_by_flags([rec(1, None)], ThresholdRule(0, 1))


def test_rule_invariant():
    with pytest.raises(ValueError):
        ThresholdRule(3, 3)
    with pytest.raises(ValueError):
        ThresholdRule(-1, 2)


def test_nine_standard_rules():
    pairs = [(r.benign_max, r.malware_min) for r in STANDARD_RULES]
    assert pairs == [(0, 1), (2, 3), (5, 6), (7, 8), (9, 10), (11, 12), (0, 6), (0, 8), (0, 10)]


@settings(max_examples=200, deadline=None)
@given(flags=st.lists(st.integers(0, 60), max_size=200), a=st.integers(0, 20), gap=st.integers(1, 20))
def test_label_partition_property(flags, a, gap):
    rule = ThresholdRule(a, a + gap)
    records = [rec(i, f) for i, f in enumerate(flags)]
    labeled, dropped = label_by_flags(records, rule)
    b = [r for r in labeled if r.label == BENIGN]
    m = [r for r in labeled if r.label == MALWARE]
    assert (len(b), len(m), dropped) == partition_counts(flags, a, a + gap)
    assert len(b) + len(m) + dropped == len(records)
    assert all(r.vt_flags <= a for r in b)
    assert all(r.vt_flags >= a + gap for r in m)


def test_histogram():
    h = flag_histogram([rec(1, 0), rec(2, 0), rec(3, 7)])
    assert h.counts == {0: 2, 7: 1} and h.max_flag == 7 and h.total == 3
    empty = flag_histogram([])
    assert empty.counts == {} and empty.max_flag is None


@given(st.lists(st.integers(0, 53), max_size=100))
def test_histogram_total(flags):
    assert flag_histogram([rec(i, f) for i, f in enumerate(flags)]).total == len(flags)


# ------------------------------------------------------------------ sample size

def test_sample_size_infinite_95_5():
    assert sample_size(None, 0.95, 0.05) == 385
    assert sample_size(math.inf, 0.95, 0.05) == 385


def test_sample_size_123453_formula_value():
    n = sample_size(123453, 0.99, 0.013)
    assert n == cochran(123453, 0.99, 0.013)
    assert 9000 < n < 9200  # about 9.1k; the reported 8,911 is a known discrepancy


@pytest.mark.parametrize("margin", [0, -0.01])
def test_bad_margin(margin):
    with pytest.raises(BadMargin):
        sample_size(1000, 0.95, margin)


def test_sample_size_matches_decimal_oracle_randomized():
    rnd = random.Random(2024)
    for _ in range(50):
        pop = rnd.choice([None, rnd.randint(1, 5_000_000)])
        conf = rnd.choice([0.90, 0.95, 0.99])
        margin = round(rnd.uniform(0.005, 0.2), 4)
        p = round(rnd.uniform(0.05, 0.95), 3)
        assert sample_size(pop, conf, margin, p) == cochran(pop, conf, margin, p)


@settings(max_examples=200)
@given(pop=st.integers(1, 10**7), margin=st.floats(0.005, 0.3), p=st.floats(0.0, 1.0))
def test_sample_size_monotone(pop, margin, p):
    n90, n95, n99 = (sample_size(pop, c, margin, p) for c in (0.90, 0.95, 0.99))
    assert n90 <= n95 <= n99
    assert sample_size(pop, 0.95, margin * 1.5, p) <= n95
    assert n95 <= sample_size(pop, 0.95, margin, 0.5)
    assert n95 <= sample_size(None, 0.95, margin, p)


def test_unlisted_confidence_uses_normal_quantile():
    # 0.97 is not tabulated; the two-sided quantile is about 2.17
    assert sample_size(None, 0.97, 0.05) == math.ceil(2.1700903775845606 ** 2 * 0.25 / 0.0025)


# ------------------------------------------------------------------ sampling

def _balanced(n):
    return [rec(i, label=BENIGN) for i in range(n)] + [rec(1000 + i, label=MALWARE) for i in range(n)]


def test_stratified_counts_and_determinism():
    records = _balanced(100)
    a = stratified_sample(records, 10, 10, 7)
    b = stratified_sample(records, 10, 10, 7)
    assert len(a) == 20
    assert sum(r.label == BENIGN for r in a) == 10
    assert {r.id for r in a} == {r.id for r in b}


def test_stratified_insufficient():
    with pytest.raises(InsufficientClass):
        stratified_sample(_balanced(100), 10, 150, 7)


@given(st.randoms(use_true_random=False))
def test_stratified_permutation_invariant(rnd):
    records = _balanced(40)
    shuffled = records[:]
    rnd.shuffle(shuffled)
    assert stratified_sample(records, 7, 9, 3) == stratified_sample(shuffled, 7, 9, 3)


# ------------------------------------------------------------------ years

def test_partition_by_year():
    records = [rec(1, year=2010), rec(2, year=2011), rec(3, year=2014), rec(4, year=2012), rec(5)]
    early, late = partition_by_year(records, [{2010, 2011}, {2014, 2015}])
    assert [r.id[-1] for r in early.records] == ["1", "2"]
    assert [r.id[-1] for r in late.records] == ["3"]
    assert early.label == "2010-2011"
    assert all(b.records == [] for b in partition_by_year([], [{2010}, {2023}]))


def test_overlapping_year_sets_share_records():
    a, b = partition_by_year([rec(1, year=2015)], [{2014, 2015}, {2015}])
    assert a.records == b.records == [rec(1, year=2015)]


# ------------------------------------------------------------------ synthetic data

def test_synth_rule_consistent():
    records = synth_generate(50, 50, 30, DEFAULT_RULES, 0.0, seed=1)
    assert len(records) == 100
    rule = DEFAULT_RULES[0]
    for r in records:
        assert rule.matches(r.permissions) == (r.label == MALWARE)
        assert len(set(r.permissions)) == len(r.permissions)


def test_synth_noise_flips_exact_count():
    clean = synth_generate(50, 50, seed=3)
    noisy = synth_generate(50, 50, seed=3, noise=0.1)
    flipped = sum(a.label != b.label for a, b in zip(clean, noisy))
    assert flipped == math.floor(0.1 * 100 + 0.5)
    assert [a.text for a in clean] == [b.text for b in noisy]


def test_synth_deterministic_and_seed_sensitive():
    assert synth_generate(20, 20, seed=5) == synth_generate(20, 20, seed=5)
    assert synth_generate(20, 20, seed=5) != synth_generate(20, 20, seed=6)


def test_synth_benign_carries_partial_markers():
    # single marker permissions must not give the label away
    records = synth_generate(200, 200, seed=0)
    benign_sms = sum("android.permission.SEND_SMS" in r.permissions for r in records if r.label == BENIGN)
    assert benign_sms > 20


def test_synth_flags_correlate_with_labels():
    records = synth_flags(synth_generate(300, 300, seed=2), seed=2)
    assert all(r.vt_flags is not None for r in records)
    ben = [r.vt_flags for r in records if r.label == BENIGN]
    mal = [r.vt_flags for r in records if r.label == MALWARE]
    assert sum(ben) / len(ben) < 2 < sum(mal) / len(mal)
    assert max(ben) <= 4


def test_drift_corpus_years_and_markers():
    years = [2010, 2011, 2014, 2015, 2018, 2019, 2023]
    records = synth_drift_corpus(years, per_year=40, seed=1)
    assert sorted({r.year for r in records}) == years
    assert all(sum(r.year == y for r in records) == 40 for y in years)
    early = [r for r in records if r.year == 2010 and r.label == MALWARE]
    late = [r for r in records if r.year == 2023 and r.label == MALWARE]
    boot = "android.permission.RECEIVE_BOOT_COMPLETED"
    assert all(boot in r.permissions for r in early)
    assert sum(boot in r.permissions for r in late) < len(late)


# ------------------------------------------------------------------ CSV

def test_csv_round_trip_1000(tmp_path):
    records = synth_flags(synth_generate(500, 500, seed=9), seed=9)
    records = [r if i % 3 else CorpusRecord(r.id, r.text, None, r.vt_flags, 2000 + i % 20)
               for i, r in enumerate(records)]
    path = tmp_path / "c.csv"
    write_corpus(path, records)
    assert read_corpus(path) == records


def test_csv_basic_schema_round_trip(tmp_path):
    records = synth_generate(10, 10, seed=1)
    path = tmp_path / "c.csv"
    write_corpus(path, records)
    assert path.read_text().splitlines()[0] == "id,text,label"
    assert read_corpus(path) == records


def test_text_with_comma_and_quote_round_trips(tmp_path):
    r = CorpusRecord("ab", 'com.x,perm "odd" name\nwrapped', 1)
    path = tmp_path / "c.csv"
    write_corpus(path, [r])
    assert '"com.x,perm ""odd"" name' in path.read_text()
    assert read_corpus(path) == [r]


def test_short_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,text,label\naa,x y,0\nbb,x y\n")
    with pytest.raises(MalformedRow) as err:
        read_corpus(path)
    assert err.value.line == 3


@pytest.mark.parametrize("row", ["aa,x,2", "aa,x,maybe"])
def test_bad_label_rejected(tmp_path, row):
    path = tmp_path / "bad.csv"
    path.write_text("id,text,label\n" + row + "\n")
    with pytest.raises(MalformedRow):
        read_corpus(path)


def test_flag_index_merge(tmp_path):
    idx = tmp_path / "latest.csv"
    with open(idx, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sha256", "year", "market", "vt_detection"])
        w.writerow(["AB" * 32, "2014", "play.google.com", "9"])
    index = read_flag_index(idx)
    merged = attach_flags([CorpusRecord("ab" * 32, "x"), CorpusRecord("cd" * 32, "y")], index)
    assert (merged[0].vt_flags, merged[0].year) == (9, 2014)
    assert merged[1].vt_flags is None


def test_dataset_hash_order_independent():
    records = synth_generate(10, 10, seed=4)
    assert dataset_hash(records) == dataset_hash(list(reversed(records)))
    assert dataset_hash(records) != dataset_hash(records[1:])
