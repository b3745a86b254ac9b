"""Tamper detection for a directory tree: seeded sentinel files, SHA-256
snapshots and snapshot diffs.

Only file content is hashed. Permission bits and mtimes are ignored.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import OutputUnwritable, RootUnreadable, TargetUnwritable

PathLike = Union[str, os.PathLike]

SENTINEL_FORMATS = ("apk", "py", "docx", "sh", "bak")

# leading bytes that make each sentinel look like its format to a casual scan
_PREAMBLE = {
    "apk": b"PK\x03\x04",
    "docx": b"PK\x03\x04",
    "py": b"# sentinel\n",
    "sh": b"#!/bin/sh\n# sentinel\n",
    "bak": b"",
}


@dataclass(frozen=True)
class SentinelSpec:
    target: Path
    formats: tuple[str, ...] = SENTINEL_FORMATS
    count: int = 1
    seed: int = 0
    size: int = 256  # random payload bytes per file

    def __post_init__(self):
        object.__setattr__(self, "target", Path(self.target))
        object.__setattr__(self, "formats", tuple(self.formats))
        if not self.formats:
            raise ValueError("formats must be non-empty")
        unknown = set(self.formats) - set(SENTINEL_FORMATS)
        if unknown:
            raise ValueError(f"unknown sentinel formats: {sorted(unknown)}")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def _payload(fmt: str, rng: random.Random, size: int) -> bytes:
    body = rng.randbytes(size)
    if fmt in ("py", "sh"):
        # keep script sentinels printable
        body = body.hex().encode("ascii")
        body = b"".join(b"# " + body[i:i + 64] + b"\n" for i in range(0, len(body), 64))
    return _PREAMBLE[fmt] + body


def create_sentinels(spec: SentinelSpec) -> list[Path]:
    """Write ``count`` files per format into ``spec.target``; same seed, same bytes."""
    rng = random.Random(spec.seed)
    created = []
    try:
        spec.target.mkdir(parents=True, exist_ok=True)
        for fmt in spec.formats:
            for i in range(spec.count):
                path = spec.target / f"sentinel_{i:03d}.{fmt}"
                path.write_bytes(_payload(fmt, rng, spec.size))
                created.append(path)
    except OSError as exc:
        raise TargetUnwritable(f"{spec.target}: {exc}") from exc
    return created


@dataclass(frozen=True)
class SnapshotEntry:
    path: str  # relative, '/'-separated
    size: int
    sha256: str
    link_target: Optional[str] = None  # set for symlinks; hash covers the target string


@dataclass
class SnapshotManifest:
    root: str
    entries: list[SnapshotEntry] = field(default_factory=list)
    created_at: str = ""

    def by_path(self) -> dict[str, SnapshotEntry]:
        return {e.path: e for e in self.entries}

    def content_equal(self, other: "SnapshotManifest") -> bool:
        return self.root == other.root and self.entries == other.entries

    def to_dict(self) -> dict:
        return {"root": self.root, "created_at": self.created_at,
                "entries": [asdict(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "SnapshotManifest":
        return cls(d["root"], [SnapshotEntry(**e) for e in d["entries"]], d.get("created_at", ""))

    def save(self, path: PathLike) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OutputUnwritable(str(exc)) from exc

    @classmethod
    def load(cls, path: PathLike) -> "SnapshotManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _hash_file(path: Path) -> tuple[int, str]:
    h = hashlib.sha256()
    size = 0
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
            size += len(block)
    return size, h.hexdigest()


def _matches(rel: str, globs: Optional[Sequence[str]]) -> bool:
    return not globs or any(fnmatch.fnmatchcase(rel, g) for g in globs)


def snapshot(root: PathLike, include_globs: Optional[Sequence[str]] = None,
             workers: int = 4) -> SnapshotManifest:
    """Hash every matching regular file under ``root``.

    Symlinks are not followed; they are recorded by the path they point to.
    ``include_globs`` are fnmatch patterns against the relative path, so
    ``*.apk`` matches at any depth. ``None`` includes everything.
    """
    root = Path(root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise RootUnreadable(str(root))

    files: list[tuple[str, Path]] = []
    links: list[SnapshotEntry] = []

    def onerror(exc: OSError):
        raise RootUnreadable(f"{exc.filename}: {exc.strerror}") from exc

    for dirpath, dirnames, filenames in os.walk(root, onerror=onerror, followlinks=False):
        base = Path(dirpath)
        # symlinked directories appear in dirnames but are not descended into
        for name in sorted(dirnames + filenames):
            full = base / name
            rel = full.relative_to(root).as_posix()
            if not _matches(rel, include_globs):
                continue
            if full.is_symlink():
                target = os.readlink(full).encode("utf-8", "surrogateescape")
                links.append(SnapshotEntry(rel, len(target), hashlib.sha256(target).hexdigest(),
                                           target.decode("utf-8", "surrogateescape")))
            elif name in filenames and full.is_file():
                files.append((rel, full))

    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            hashed = list(pool.map(lambda item: _hash_file(item[1]), files))
    except OSError as exc:
        raise RootUnreadable(str(exc)) from exc

    entries = [SnapshotEntry(rel, size, digest) for (rel, _), (size, digest) in zip(files, hashed)]
    entries += links
    entries.sort(key=lambda e: e.path)
    return SnapshotManifest(str(root), entries, datetime.now(timezone.utc).isoformat())


@dataclass(frozen=True)
class DiffReport:
    modified: tuple[str, ...] = ()
    missing: tuple[str, ...] = ()
    added: tuple[str, ...] = ()

    @property
    def clean(self) -> bool:
        return not (self.modified or self.missing or self.added)

    def to_dict(self) -> dict:
        return {"modified": list(self.modified), "missing": list(self.missing),
                "added": list(self.added)}

    def save(self, path: PathLike) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OutputUnwritable(str(exc)) from exc


def diff(before: SnapshotManifest, after: SnapshotManifest) -> DiffReport:
    b, a = before.by_path(), after.by_path()
    modified = sorted(p for p in b.keys() & a.keys()
                      if (b[p].sha256, b[p].link_target) != (a[p].sha256, a[p].link_target))
    return DiffReport(tuple(modified), tuple(sorted(b.keys() - a.keys())),
                      tuple(sorted(a.keys() - b.keys())))
