from .axml import AxmlAttribute, AxmlElement, ManifestDocument, StringPool, parse_axml
from .permissions import (
    ExtractionSummary,
    PermissionList,
    apk_permissions,
    batch_extract,
    extract_permissions,
)
from .zipread import ZipEntryMeta, list_entries, read_apk_entry

__all__ = [
    "AxmlAttribute",
    "AxmlElement",
    "ExtractionSummary",
    "ManifestDocument",
    "PermissionList",
    "StringPool",
    "ZipEntryMeta",
    "apk_permissions",
    "batch_extract",
    "extract_permissions",
    "list_entries",
    "parse_axml",
    "read_apk_entry",
]
