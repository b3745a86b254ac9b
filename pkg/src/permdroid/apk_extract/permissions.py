"""Permission extraction from decoded manifests and APK directories."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..errors import ApkError, AxmlError, EntryNotFound, OutputUnwritable
from .axml import ANDROID_NS, TYPE_STRING, ManifestDocument, parse_axml
from .zipread import read_apk_entry

log = logging.getLogger(__name__)

ANDROID_NAME_RES_ID = 0x01010003
PERMISSION_ELEMENTS = ("uses-permission", "uses-permission-sdk-23")
MANIFEST_ENTRY = "AndroidManifest.xml"


@dataclass
class PermissionList:
    permissions: list[str]
    source_apk_hash: str = ""
    warnings: int = 0

    def text(self) -> str:
        return " ".join(self.permissions)


def _name_attribute(attrs, use_resource_ids: bool):
    if use_resource_ids:
        for a in attrs:
            if a.resource_id == ANDROID_NAME_RES_ID:
                return a
    for a in attrs:
        if a.name == "name" and a.namespace == ANDROID_NS:
            return a
    return None


def extract_permissions(doc: ManifestDocument, source_apk_hash: str = "") -> PermissionList:
    """Requested permissions in document order, first occurrence kept.

    ``android:name`` is located by resource id 0x01010003 when the document
    has a resource map, falling back to namespace + local name.
    """
    use_ids = bool(doc.resource_map)
    seen: set[str] = set()
    out: list[str] = []
    warnings = 0
    for elem in doc.iter():
        if elem.name not in PERMISSION_ELEMENTS:
            continue
        attr = _name_attribute(elem.attributes, use_ids)
        if attr is None or attr.value_type != TYPE_STRING:
            warnings += 1
            continue
        value = doc.pool.strings[attr.value_data]
        if not value:
            warnings += 1
            continue
        if value not in seen:
            seen.add(value)
            out.append(value)
    return PermissionList(out, source_apk_hash, warnings)


def apk_permissions(apk: Union[bytes, str, os.PathLike]) -> PermissionList:
    data = apk if isinstance(apk, bytes) else Path(apk).read_bytes()
    digest = hashlib.sha256(data).hexdigest()
    doc = parse_axml(read_apk_entry(data, MANIFEST_ENTRY))
    return extract_permissions(doc, digest)


@dataclass
class ExtractionSummary:
    ok: int = 0
    failed: int = 0
    no_manifest: int = 0
    failures: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "failed": self.failed, "no_manifest": self.no_manifest}


def _extract_one(path: str) -> tuple[str, str, Optional[str], Optional[PermissionList]]:
    """(path, status, error, result); never raises for malformed input."""
    try:
        return path, "ok", None, apk_permissions(path)
    except EntryNotFound:
        return path, "no_manifest", "AndroidManifest.xml missing", None
    except (ApkError, AxmlError, OSError) as exc:
        return path, "failed", f"{type(exc).__name__}: {exc}", None


def batch_extract(apk_dir: Union[str, os.PathLike], out: Union[str, os.PathLike],
                  warnings_path: Union[str, os.PathLike, None] = None,
                  workers: int = 1) -> ExtractionSummary:
    """Extract permissions from every regular file in ``apk_dir`` into a CSV.

    Rows are ``id,text,label`` with ``id`` the SHA-256 of the APK, written in
    ascending id order whatever the worker count. Failures are tallied and
    optionally logged (JSON lines) to ``warnings_path``.
    """
    paths = sorted(str(p) for p in Path(apk_dir).iterdir() if p.is_file())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, paths))
    else:
        results = [_extract_one(p) for p in paths]

    summary = ExtractionSummary()
    rows = {}
    notes = []
    for path, status, error, perms in results:
        if status == "ok":
            summary.ok += 1
            rows[perms.source_apk_hash] = perms.text()
            if perms.warnings:
                notes.append({"file": os.path.basename(path), "status": "ok",
                              "skipped_attributes": perms.warnings})
        else:
            if status == "no_manifest":
                summary.no_manifest += 1
            else:
                summary.failed += 1
            summary.failures[os.path.basename(path)] = error
            notes.append({"file": os.path.basename(path), "status": status, "error": error})
            log.warning("%s: %s", path, error)

    try:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "text", "label"])
            for digest in sorted(rows):
                w.writerow([digest, rows[digest], ""])
        if warnings_path is not None:
            with open(warnings_path, "w", encoding="utf-8") as fh:
                for note in notes:
                    fh.write(json.dumps(note) + "\n")
    except OSError as exc:
        raise OutputUnwritable(str(exc)) from exc
    return summary
