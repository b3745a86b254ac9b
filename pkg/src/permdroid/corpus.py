"""Permission corpus: records, CSV I/O, flag-threshold labeling, sampling and
synthetic generators for desk-scale experiments."""

from __future__ import annotations

import csv
import hashlib
import math
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from statistics import NormalDist
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import BadMargin, InsufficientClass, MalformedRow, MissingFlags, OutputUnwritable

BENIGN = 0
MALWARE = 1

PathLike = Union[str, os.PathLike]


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    text: str
    label: Optional[int] = None  # None = unlabeled
    vt_flags: Optional[int] = None
    year: Optional[int] = None

    def __post_init__(self):
        if self.label not in (None, BENIGN, MALWARE):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")
        if self.vt_flags is not None and self.vt_flags < 0:
            raise ValueError("vt_flags must be non-negative")

    @property
    def permissions(self) -> list[str]:
        return self.text.split()


# --------------------------------------------------------------------------- I/O

BASE_FIELDS = ["id", "text", "label"]
EXTRA_FIELDS = ["vt_flags", "year"]


def _opt_int(value: str, line: int, name: str) -> Optional[int]:
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise MalformedRow(line, f"{name}={value!r} is not an integer") from None


def read_corpus(path: PathLike) -> list[CorpusRecord]:
    """Read an ``id,text,label[,vt_flags,year]`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if header[:3] != BASE_FIELDS or any(h not in EXTRA_FIELDS for h in header[3:]):
            raise MalformedRow(1, f"unexpected header {header}")
        records = []
        for row in reader:
            line = reader.line_num
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            values = dict(zip(header, row))
            label = _opt_int(values["label"], line, "label")
            if label not in (None, BENIGN, MALWARE):
                raise MalformedRow(line, f"label {label} not in {{0,1,''}}")
            flags = _opt_int(values.get("vt_flags", ""), line, "vt_flags")
            if flags is not None and flags < 0:
                raise MalformedRow(line, "negative vt_flags")
            records.append(CorpusRecord(values["id"], values["text"], label, flags,
                                        _opt_int(values.get("year", ""), line, "year")))
    return records


def write_corpus(path: PathLike, records: Iterable[CorpusRecord], extended: Optional[bool] = None) -> None:
    """Write records as CSV; the ``vt_flags,year`` columns appear when any
    record carries them (or when ``extended`` forces it)."""
    records = list(records)
    if extended is None:
        extended = any(r.vt_flags is not None or r.year is not None for r in records)
    header = BASE_FIELDS + (EXTRA_FIELDS if extended else [])

    def cell(v):
        return "" if v is None else v

    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in records:
                row = [r.id, r.text, cell(r.label)]
                if extended:
                    row += [cell(r.vt_flags), cell(r.year)]
                w.writerow(row)
    except OSError as exc:
        raise OutputUnwritable(str(exc)) from exc


def read_flag_index(path: PathLike) -> dict[str, tuple[Optional[int], int]]:
    """AndroZoo-style ``sha256,year,market,vt_detection`` index -> {sha256: (year, flags)}."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                flags = int(row["vt_detection"])
                year = int(row["year"]) if row.get("year") else None
            except (KeyError, ValueError, TypeError):
                raise MalformedRow(reader.line_num, f"bad flag index row {row}") from None
            out[row["sha256"].lower()] = (year, flags)
    return out


def attach_flags(records: Iterable[CorpusRecord], index: dict[str, tuple[Optional[int], int]]
                 ) -> list[CorpusRecord]:
    """Fill vt_flags / year from a flag index; records absent from it are kept unchanged."""
    out = []
    for r in records:
        if r.id.lower() in index:
            year, flags = index[r.id.lower()]
            r = replace(r, vt_flags=flags, year=year if year is not None else r.year)
        out.append(r)
    return out


def dataset_hash(records: Iterable[CorpusRecord]) -> str:
    h = hashlib.sha256()
    for r in sorted(records, key=lambda r: r.id):
        h.update(f"{r.id}\t{r.text}\t{r.label}\n".encode())
    return h.hexdigest()


# ------------------------------------------------------------------ labeling

@dataclass(frozen=True)
class ThresholdRule:
    benign_max: int
    malware_min: int

    def __post_init__(self):
        if not 0 <= self.benign_max < self.malware_min:
            raise ValueError(f"need 0 <= benign_max < malware_min, got {self}")

    @property
    def name(self) -> str:
        b = "0" if self.benign_max == 0 else f"0-{self.benign_max}"
        return f"{b}|{self.malware_min}+"


# six contiguous benign/malware splits, then three that keep only zero-flag apps as benign
STANDARD_RULES = [
    ThresholdRule(0, 1),
    ThresholdRule(2, 3),
    ThresholdRule(5, 6),
    ThresholdRule(7, 8),
    ThresholdRule(9, 10),
    ThresholdRule(11, 12),
    ThresholdRule(0, 6),
    ThresholdRule(0, 8),
    ThresholdRule(0, 10),
]


def label_by_flags(records: Iterable[CorpusRecord], rule: ThresholdRule
                   ) -> tuple[list[CorpusRecord], int]:
    labeled, dropped = [], 0
    for r in records:
        if r.vt_flags is None:
            raise MissingFlags(f"record {r.id} has no vt_flags")
        if r.vt_flags <= rule.benign_max:
            labeled.append(replace(r, label=BENIGN))
        elif r.vt_flags >= rule.malware_min:
            labeled.append(replace(r, label=MALWARE))
        else:
            dropped += 1
    return labeled, dropped


@dataclass
class FlagHistogram:
    counts: dict[int, int]
    max_flag: Optional[int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def flag_histogram(records: Iterable[CorpusRecord]) -> FlagHistogram:
    c = Counter()
    for r in records:
        if r.vt_flags is None:
            raise MissingFlags(f"record {r.id} has no vt_flags")
        c[r.vt_flags] += 1
    counts = dict(sorted(c.items()))
    return FlagHistogram(counts, max(counts) if counts else None)


# ---------------------------------------------------------------- sampling

Z_TABLE = {0.80: 1.28, 0.85: 1.44, 0.90: 1.645, 0.95: 1.96, 0.98: 2.326, 0.99: 2.576, 0.999: 3.291}


def z_value(confidence: float) -> float:
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    for c, z in Z_TABLE.items():
        if math.isclose(confidence, c, abs_tol=1e-12):
            return z
    return NormalDist().inv_cdf(0.5 + confidence / 2)


@dataclass(frozen=True)
class SampleSizeSpec:
    population: Optional[int]  # None = infinite
    confidence: float
    margin: float
    proportion: float = 0.5


def sample_size(population: Optional[int], confidence: float, margin: float,
                proportion: float = 0.5) -> int:
    """Cochran sample size with finite-population correction, rounded up.

    n0 = Z^2 p (1-p) / E^2, then n = n0 / (1 + (n0 - 1) / N) for finite N.
    """
    if not margin > 0:
        raise BadMargin(f"margin must be > 0, got {margin}")
    if not 0 <= proportion <= 1:
        raise ValueError("proportion must lie in [0, 1]")
    if population is not None and math.isinf(population):
        population = None
    if population is not None and population <= 0:
        raise ValueError("population must be positive")
    z = Fraction(str(z_value(confidence)))
    p = Fraction(proportion)
    e = Fraction(margin)
    n = z * z * p * (1 - p) / (e * e)
    if n == 0:  # p in {0, 1}: no variance to estimate
        return 0
    if population is not None:
        n = n / (1 + (n - 1) / population)
    return math.ceil(n)


def stratified_sample(records: Sequence[CorpusRecord], n_benign: int, n_malware: int,
                      seed: int) -> list[CorpusRecord]:
    """Uniform sampling without replacement per class; order-independent."""
    ordered = sorted(records, key=lambda r: r.id)
    rng = np.random.default_rng(seed)
    out = []
    for label, n in ((BENIGN, n_benign), (MALWARE, n_malware)):
        pool = [r for r in ordered if r.label == label]
        if n > len(pool):
            raise InsufficientClass(f"requested {n} of class {label}, only {len(pool)} available")
        idx = np.sort(rng.choice(len(pool), size=n, replace=False))
        out.extend(pool[i] for i in idx)
    return out


@dataclass
class YearBucket:
    years: frozenset
    records: list[CorpusRecord] = field(default_factory=list)

    @property
    def label(self) -> str:
        ys = sorted(self.years)
        return "-".join(str(y) for y in ys) if len(ys) <= 2 else ",".join(map(str, ys))


def partition_by_year(records: Iterable[CorpusRecord], year_sets: Sequence[Iterable[int]]
                      ) -> list[YearBucket]:
    buckets = [YearBucket(frozenset(ys)) for ys in year_sets]
    for r in records:
        if r.year is None:
            continue
        for b in buckets:
            if r.year in b.years:
                b.records.append(r)
    return buckets


# --------------------------------------------------------------- synthetic data

ANDROID_PERMISSIONS = [
    "INTERNET", "ACCESS_NETWORK_STATE", "READ_PHONE_STATE", "SEND_SMS", "RECEIVE_SMS",
    "READ_SMS", "WRITE_SMS", "RECEIVE_BOOT_COMPLETED", "ACCESS_FINE_LOCATION",
    "ACCESS_COARSE_LOCATION", "CAMERA", "RECORD_AUDIO", "READ_CONTACTS", "WRITE_CONTACTS",
    "CALL_PHONE", "WAKE_LOCK", "VIBRATE", "WRITE_EXTERNAL_STORAGE", "READ_EXTERNAL_STORAGE",
    "GET_ACCOUNTS", "ACCESS_WIFI_STATE", "CHANGE_WIFI_STATE", "BLUETOOTH", "INSTALL_PACKAGES",
    "SYSTEM_ALERT_WINDOW", "READ_CALL_LOG", "PROCESS_OUTGOING_CALLS", "MOUNT_UNMOUNT_FILESYSTEMS",
    "CHANGE_NETWORK_STATE", "GET_TASKS", "KILL_BACKGROUND_PROCESSES", "DISABLE_KEYGUARD",
    "WRITE_SETTINGS", "READ_LOGS", "NFC", "USE_FINGERPRINT", "FOREGROUND_SERVICE",
    "REQUEST_INSTALL_PACKAGES", "BIND_ACCESSIBILITY_SERVICE", "QUERY_ALL_PACKAGES",
]


def permission_vocabulary(size: int) -> list[str]:
    """``size`` fully qualified permission names, real ones first."""
    names = ["android.permission." + p for p in ANDROID_PERMISSIONS[:size]]
    names += [f"com.vendor{i % 7}.permission.P{i:03d}" for i in range(len(names), size)]
    return names


@dataclass(frozen=True)
class MarkerRule:
    """An app is malware when it requests every permission in ``all_of``."""
    all_of: tuple[str, ...]

    def matches(self, perms: Iterable[str]) -> bool:
        s = set(perms)
        return all(p in s for p in self.all_of)


DEFAULT_RULES = (
    MarkerRule(("android.permission.SEND_SMS", "android.permission.RECEIVE_BOOT_COMPLETED")),
)


def _synth_id(seed: int, i: int, salt: str) -> str:
    return hashlib.sha256(f"{salt}:{seed}:{i}".encode()).hexdigest()


def synth_generate(n_benign: int, n_malware: int, vocab_size: int = 30,
                   marker_rules: Sequence[MarkerRule] = DEFAULT_RULES, noise: float = 0.0,
                   seed: int = 0, year: Optional[int] = None, min_perms: int = 3,
                   max_perms: int = 12, salt: str = "synth") -> list[CorpusRecord]:
    """Rule-labelled synthetic corpus.

    Malware apps contain every permission of one marker rule; benign apps are
    built so no rule is complete, but they frequently carry partial markers so
    single-permission presence is not enough to separate the classes. Exactly
    round(noise * n) labels are flipped afterwards.
    """
    rng = np.random.default_rng(seed)
    vocab = permission_vocabulary(vocab_size)
    markers = sorted({p for rule in marker_rules for p in rule.all_of})
    for p in markers:
        if p not in vocab:
            vocab.append(p)
    background = [p for p in vocab if p not in markers]

    def base_perms() -> list[str]:
        k = int(rng.integers(min_perms, max_perms + 1))
        k = min(k, len(background))
        return [background[i] for i in rng.choice(len(background), size=k, replace=False)]

    records = []
    for i in range(n_benign + n_malware):
        perms = base_perms()
        if i < n_benign:
            for rule in marker_rules:
                # a strict, non-empty subset of the rule's permissions half the time
                if len(rule.all_of) > 1 and rng.random() < 0.5:
                    keep = int(rng.integers(1, len(rule.all_of)))
                    chosen = rng.choice(len(rule.all_of), size=keep, replace=False)
                    perms += [rule.all_of[j] for j in chosen]
            perms = list(dict.fromkeys(perms))
            if any(rule.matches(perms) for rule in marker_rules):  # overlapping rules
                for rule in marker_rules:
                    if rule.matches(perms):
                        perms.remove(rule.all_of[0])
            label = BENIGN
        else:
            rule = marker_rules[int(rng.integers(len(marker_rules)))]
            perms = list(dict.fromkeys(perms + list(rule.all_of)))
            label = MALWARE
        order = rng.permutation(len(perms))
        perms = [perms[j] for j in order]
        records.append(CorpusRecord(_synth_id(seed, i, salt), " ".join(perms), label, None, year))

    n = len(records)
    n_flip = int(math.floor(noise * n + 0.5))
    if n_flip:
        for j in rng.choice(n, size=n_flip, replace=False):
            r = records[j]
            records[j] = replace(r, label=1 - r.label)
    return records


def synth_flags(records: Sequence[CorpusRecord], seed: int = 0, benign_fp: float = 0.25,
                malware_weak: float = 0.2, max_flags: int = 53) -> list[CorpusRecord]:
    """Attach VirusTotal-style flag counts correlated with the labels.

    Benign apps mostly get 0 flags, with a ``benign_fp`` share of 1-4 spurious
    detections; malware gets a broad spread, a ``malware_weak`` share sitting
    in the ambiguous 1-7 range.
    """
    rng = np.random.default_rng(seed)
    out = []
    for r in records:
        if r.label == MALWARE:
            if rng.random() < malware_weak:
                f = int(rng.integers(1, 8))
            else:
                f = int(min(max_flags, 8 + rng.geometric(0.08) - 1))
        else:
            f = int(rng.integers(1, 5)) if rng.random() < benign_fp else 0
        out.append(replace(r, vt_flags=f))
    return out


_A = "android.permission."
DRIFT_ERAS = (
    (MarkerRule((_A + "SEND_SMS", _A + "RECEIVE_BOOT_COMPLETED")),),
    (MarkerRule((_A + "SEND_SMS", _A + "SYSTEM_ALERT_WINDOW")),
     MarkerRule((_A + "READ_CONTACTS", _A + "INSTALL_PACKAGES")),),
    (MarkerRule((_A + "SYSTEM_ALERT_WINDOW", _A + "BIND_ACCESSIBILITY_SERVICE")),
     MarkerRule((_A + "QUERY_ALL_PACKAGES", _A + "REQUEST_INSTALL_PACKAGES")),),
    (MarkerRule((_A + "BIND_ACCESSIBILITY_SERVICE", _A + "FOREGROUND_SERVICE")),
     MarkerRule((_A + "READ_CALL_LOG", _A + "USE_FINGERPRINT")),),
)


def synth_drift_corpus(years: Sequence[int], per_year: int = 200, vocab_size: int = 30,
                       seed: int = 0, shift_every: int = 4) -> list[CorpusRecord]:
    """Year-stamped corpus whose malware markers drift over time.

    Every ``shift_every`` years (counted from the earliest year) the marker
    rules move to the next era. Consecutive eras share one permission, so a
    model trained on early years meets partly unfamiliar signatures later.
    """
    first = min(years)
    out = []
    for k, y in enumerate(sorted(years)):
        era = DRIFT_ERAS[min((y - first) // shift_every, len(DRIFT_ERAS) - 1)]
        out += synth_generate(per_year // 2, per_year - per_year // 2, vocab_size, era, 0.0,
                              seed * 1000 + k, year=y, salt=f"drift{y}")
    return out
