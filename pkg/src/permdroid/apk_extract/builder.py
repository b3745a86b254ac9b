"""AXML encoder and toy APK writer, used to produce fixtures.

The encoder lays strings out the way aapt does: attribute names that carry a
framework resource id come first so the resource map can be indexed by
string index.
"""

from __future__ import annotations

import io
import struct
import zipfile
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .axml import (
    ANDROID_NS,
    NO_INDEX,
    RES_STRING_POOL_TYPE,
    RES_XML_END_ELEMENT_TYPE,
    RES_XML_END_NAMESPACE_TYPE,
    RES_XML_RESOURCE_MAP_TYPE,
    RES_XML_START_ELEMENT_TYPE,
    RES_XML_START_NAMESPACE_TYPE,
    RES_XML_TYPE,
    TYPE_INT_BOOLEAN,
    TYPE_INT_DEC,
    TYPE_STRING,
    UTF8_FLAG,
)

ANDROID_ATTR_IDS = {
    "label": 0x01010001,
    "icon": 0x01010002,
    "name": 0x01010003,
    "protectionLevel": 0x01010009,
    "minSdkVersion": 0x0101020C,
    "versionCode": 0x0101021B,
    "versionName": 0x0101021C,
    "maxSdkVersion": 0x01010271,
    "targetSdkVersion": 0x01010270,
}

Value = Union[str, int, bool]


@dataclass
class Element:
    name: str
    attrs: list[tuple[Optional[str], str, Value]] = field(default_factory=list)
    children: list["Element"] = field(default_factory=list)


def manifest_tree(package: str, permissions: Sequence[str], sdk23: Sequence[str] = (),
                  defined: Sequence[str] = ()) -> Element:
    root = Element("manifest", [(ANDROID_NS, "versionCode", 1), (None, "package", package)])
    root.children.append(Element("uses-sdk", [(ANDROID_NS, "minSdkVersion", 21)]))
    for p in defined:
        root.children.append(Element("permission", [(ANDROID_NS, "name", p)]))
    for p in permissions:
        root.children.append(Element("uses-permission", [(ANDROID_NS, "name", p)]))
    for p in sdk23:
        root.children.append(Element("uses-permission-sdk-23", [(ANDROID_NS, "name", p)]))
    app = Element("application", [(ANDROID_NS, "label", "app")])
    app.children.append(Element("activity", [(ANDROID_NS, "name", ".Main")]))
    root.children.append(app)
    return root


def _chunk(ctype: int, header: bytes, body: bytes) -> bytes:
    hsize = 8 + len(header)
    return struct.pack("<HHI", ctype, hsize, hsize + len(body)) + header + body


def _encode_len_utf8(n: int) -> bytes:
    if n > 0x7F:
        return bytes([0x80 | (n >> 8), n & 0xFF])
    return bytes([n])


def _encode_len_utf16(n: int) -> bytes:
    if n > 0x7FFF:
        return struct.pack("<HH", 0x8000 | (n >> 16), n & 0xFFFF)
    return struct.pack("<H", n)


def string_pool_chunk(strings: Sequence[str], utf8: bool = False) -> bytes:
    blobs = []
    for s in strings:
        if utf8:
            raw = s.encode("utf-8")
            units = len(s.encode("utf-16-le")) // 2
            blobs.append(_encode_len_utf8(units) + _encode_len_utf8(len(raw)) + raw + b"\x00")
        else:
            raw = s.encode("utf-16-le")
            blobs.append(_encode_len_utf16(len(raw) // 2) + raw + b"\x00\x00")
    offsets, pos = [], 0
    for b in blobs:
        offsets.append(pos)
        pos += len(b)
    data = b"".join(blobs)
    data += b"\x00" * (-len(data) % 4)
    header_size = 28
    strings_start = header_size + 4 * len(strings)
    header = struct.pack("<IIIII", len(strings), 0, UTF8_FLAG if utf8 else 0, strings_start, 0)
    return _chunk(RES_STRING_POOL_TYPE, header, struct.pack(f"<{len(offsets)}I", *offsets) + data)


def build_axml(root: Element, utf8: bool = False, resource_map: bool = True,
               unknown_chunk_after: Optional[int] = None, strip_attr_names: bool = False) -> bytes:
    """Serialise ``root`` to AXML bytes.

    ``unknown_chunk_after`` inserts a type-0x00FF chunk after the n-th body
    chunk; ``strip_attr_names`` blanks android attribute names in the pool
    (resource ids still identify them), as obfuscators do.
    """
    id_names: list[str] = []
    others: list[str] = []

    def visit(e: Element) -> None:
        for ns, name, value in e.attrs:
            if ns == ANDROID_NS and name in ANDROID_ATTR_IDS:
                if name not in id_names:
                    id_names.append(name)
            elif name not in others:
                others.append(name)
        for child in e.children:
            visit(child)

    visit(root)
    values: list[str] = []

    def collect(e: Element) -> None:
        values.append(e.name)
        for _, _, v in e.attrs:
            if isinstance(v, str):
                values.append(v)
        for child in e.children:
            collect(child)

    collect(root)
    strings: list[str] = [("" if strip_attr_names else n) for n in id_names] if resource_map else []
    if not resource_map:
        others = id_names + [n for n in others if n not in id_names]
    index: dict[str, int] = {}
    if resource_map:
        for i, n in enumerate(id_names):
            index[n] = i  # by name; strings may be blank
    for s in [ANDROID_NS, "android"] + others + values:
        if s not in index:
            index[s] = len(strings)
            strings.append(s)

    body: list[bytes] = []
    node_hdr = struct.pack("<II", 1, NO_INDEX)
    ns_body = struct.pack("<II", index["android"], index[ANDROID_NS])
    body.append(_chunk(RES_XML_START_NAMESPACE_TYPE, node_hdr, ns_body))

    def emit(e: Element) -> None:
        attrs = b""
        for ns, name, value in e.attrs:
            ns_idx = index[ns] if ns is not None else NO_INDEX
            if isinstance(value, bool):
                raw, vtype, data = NO_INDEX, TYPE_INT_BOOLEAN, 0xFFFFFFFF if value else 0
            elif isinstance(value, int):
                raw, vtype, data = NO_INDEX, TYPE_INT_DEC, value & 0xFFFFFFFF
            else:
                raw, vtype, data = index[value], TYPE_STRING, index[value]
            attrs += struct.pack("<IIIHBBI", ns_idx, index[name], raw, 8, 0, vtype, data)
        ext = struct.pack("<IIHHHHHH", NO_INDEX, index[e.name], 20, 20, len(e.attrs), 0, 0, 0)
        body.append(_chunk(RES_XML_START_ELEMENT_TYPE, node_hdr, ext + attrs))
        for child in e.children:
            emit(child)
        body.append(_chunk(RES_XML_END_ELEMENT_TYPE, node_hdr, struct.pack("<II", NO_INDEX, index[e.name])))

    emit(root)
    body.append(_chunk(RES_XML_END_NAMESPACE_TYPE, node_hdr, ns_body))
    if unknown_chunk_after is not None:
        body.insert(unknown_chunk_after, _chunk(0x00FF, b"", b"\xde\xad\xbe\xef"))

    chunks = [string_pool_chunk(strings, utf8)]
    if resource_map and id_names:
        ids = [ANDROID_ATTR_IDS[n] for n in id_names]
        chunks.append(_chunk(RES_XML_RESOURCE_MAP_TYPE, b"", struct.pack(f"<{len(ids)}I", *ids)))
    payload = b"".join(chunks + body)
    return struct.pack("<HHI", RES_XML_TYPE, 8, 8 + len(payload)) + payload


def build_manifest(package: str, permissions: Sequence[str], **kwargs) -> bytes:
    tree_kw = {k: kwargs.pop(k) for k in ("sdk23", "defined") if k in kwargs}
    return build_axml(manifest_tree(package, permissions, **tree_kw), **kwargs)


def build_apk(manifest: Optional[bytes], extra: Optional[dict[str, bytes]] = None,
              compress: bool = True) -> bytes:
    """Pack a manifest (and optional extra entries) into an APK-shaped ZIP."""
    buf = io.BytesIO()
    method = zipfile.ZIP_DEFLATED if compress else zipfile.ZIP_STORED
    with zipfile.ZipFile(buf, "w", compression=method) as zf:
        if manifest is not None:
            zf.writestr(zipfile.ZipInfo("AndroidManifest.xml", (2020, 1, 1, 0, 0, 0)), manifest,
                        compress_type=method)
        zf.writestr(zipfile.ZipInfo("classes.dex", (2020, 1, 1, 0, 0, 0)), b"dex\n035\x00" + bytes(64),
                    compress_type=method)
        for name, data in (extra or {}).items():
            zf.writestr(zipfile.ZipInfo(name, (2020, 1, 1, 0, 0, 0)), data, compress_type=method)
    return buf.getvalue()
