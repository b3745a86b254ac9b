"""Decoder for Android binary XML (AXML), the encoding of AndroidManifest.xml.

Layout reminder (all integers little-endian)::

    chunk header   u16 type, u16 header_size, u32 chunk_size
    0x0003         file chunk wrapping everything below
    0x0001         string pool
    0x0180         resource map: u32 resource id per attribute-name string
    0x0100/0x0101  namespace start / end
    0x0102/0x0103  element start / end
    0x0104         CDATA

Every read is bounds checked against the enclosing chunk, so any truncated or
corrupted input ends in an ``AxmlError`` subclass rather than an IndexError or
struct.error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

from ..errors import BadStringIndex, NotAxml, TruncatedChunk

RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE_TYPE = 0x0100
RES_XML_END_NAMESPACE_TYPE = 0x0101
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103
RES_XML_CDATA_TYPE = 0x0104
RES_XML_RESOURCE_MAP_TYPE = 0x0180

SORTED_FLAG = 1 << 0
UTF8_FLAG = 1 << 8

NO_INDEX = 0xFFFFFFFF

# Res_value dataType
TYPE_NULL = 0x00
TYPE_REFERENCE = 0x01
TYPE_ATTRIBUTE = 0x02
TYPE_STRING = 0x03
TYPE_FLOAT = 0x04
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12

ANDROID_NS = "http://schemas.android.com/apk/res/android"


@dataclass
class StringPool:
    strings: list[str]
    encoding: str = "utf16le"  # or "utf8"
    sorted_flag: bool = False

    def __len__(self) -> int:
        return len(self.strings)

    def get(self, idx: int) -> Optional[str]:
        if idx == NO_INDEX:
            return None
        if not 0 <= idx < len(self.strings):
            raise BadStringIndex(f"string index {idx} outside pool of {len(self.strings)}")
        return self.strings[idx]


@dataclass
class AxmlAttribute:
    ns_idx: int
    name_idx: int
    raw_value_idx: int
    value_type: int
    value_data: int
    resource_id: Optional[int] = None
    # resolved through the pool at parse time
    namespace: Optional[str] = None
    name: str = ""
    raw_value: Optional[str] = None

    def string_value(self, pool: StringPool) -> Optional[str]:
        if self.value_type == TYPE_STRING:
            return pool.get(self.value_data)
        return None


@dataclass
class AxmlElement:
    namespace: Optional[str]
    name: str
    attributes: list[AxmlAttribute] = field(default_factory=list)
    children: list["AxmlElement"] = field(default_factory=list)
    line: int = 0

    def iter(self) -> Iterator["AxmlElement"]:
        yield self
        for child in self.children:
            yield from child.iter()


@dataclass
class ManifestDocument:
    pool: StringPool
    roots: list[AxmlElement]
    resource_map: list[int] = field(default_factory=list)
    namespaces: dict[str, str] = field(default_factory=dict)  # uri -> prefix
    warnings: list[str] = field(default_factory=list)

    @property
    def root(self) -> Optional[AxmlElement]:
        return self.roots[0] if self.roots else None

    def iter(self) -> Iterator[AxmlElement]:
        for r in self.roots:
            yield from r.iter()


class _Reader:
    """Bounds-checked little-endian reads within [lo, hi)."""

    def __init__(self, buf: bytes, lo: int, hi: int):
        self.buf, self.lo, self.hi = buf, lo, hi

    def unpack(self, fmt: str, off: int) -> tuple:
        size = struct.calcsize(fmt)
        if off < self.lo or off + size > self.hi:
            raise TruncatedChunk(f"read of {size} bytes at {off} outside [{self.lo}, {self.hi})")
        return struct.unpack_from(fmt, self.buf, off)

    def u8(self, off: int) -> int:
        return self.unpack("<B", off)[0]

    def u16(self, off: int) -> int:
        return self.unpack("<H", off)[0]

    def u32(self, off: int) -> int:
        return self.unpack("<I", off)[0]

    def slice(self, off: int, n: int) -> bytes:
        if n < 0 or off < self.lo or off + n > self.hi:
            raise TruncatedChunk(f"slice of {n} bytes at {off} outside [{self.lo}, {self.hi})")
        return self.buf[off:off + n]


def _chunk_header(buf: bytes, off: int, end: int) -> tuple[int, int, int]:
    if off + 8 > end:
        raise TruncatedChunk(f"chunk header at {off} overruns buffer")
    ctype, hsize, csize = struct.unpack_from("<HHI", buf, off)
    if csize < 8 or hsize < 8 or hsize > csize:
        raise TruncatedChunk(f"chunk at {off}: header {hsize} / size {csize} inconsistent")
    if off + csize > end:
        raise TruncatedChunk(f"chunk at {off} of size {csize} overruns buffer end {end}")
    return ctype, hsize, csize


def _utf16_string(r: _Reader, off: int) -> str:
    n = r.u16(off)
    off += 2
    if n & 0x8000:
        n = ((n & 0x7FFF) << 16) | r.u16(off)
        off += 2
    return r.slice(off, 2 * n).decode("utf-16-le", errors="replace")


def _utf8_length(r: _Reader, off: int) -> tuple[int, int]:
    n = r.u8(off)
    off += 1
    if n & 0x80:
        n = ((n & 0x7F) << 8) | r.u8(off)
        off += 1
    return n, off


def _utf8_string(r: _Reader, off: int) -> str:
    _, off = _utf8_length(r, off)  # utf-16 length, unused
    nbytes, off = _utf8_length(r, off)
    return r.slice(off, nbytes).decode("utf-8", errors="replace")


def parse_string_pool(buf: bytes, off: int, hsize: int, csize: int) -> StringPool:
    r = _Reader(buf, off, off + csize)
    count, _style_count, flags, strings_start, _styles_start = r.unpack("<IIIII", off + 8)
    is_utf8 = bool(flags & UTF8_FLAG)
    if count > csize // 4:
        raise TruncatedChunk(f"string pool claims {count} strings in {csize} bytes")
    offsets = r.unpack(f"<{count}I", off + hsize) if count else ()
    base = off + strings_start
    decode = _utf8_string if is_utf8 else _utf16_string
    strings = [decode(r, base + o) for o in offsets]
    return StringPool(strings, "utf8" if is_utf8 else "utf16le", bool(flags & SORTED_FLAG))


def parse_axml(data: bytes) -> ManifestDocument:
    """Decode an AXML byte string into a ManifestDocument.

    Unknown chunk types are skipped by their declared size. Attributes that
    reference strings outside the pool are dropped with a warning; a bad index
    in an element's own name raises BadStringIndex.
    """
    data = bytes(data)
    if len(data) < 8:
        raise NotAxml("input shorter than a chunk header")
    ftype, fhsize, fsize = struct.unpack_from("<HHI", data, 0)
    if ftype != RES_XML_TYPE:
        raise NotAxml(f"first chunk type 0x{ftype:04x}, expected 0x0003")
    if fhsize < 8 or fsize < fhsize:
        raise TruncatedChunk("file header inconsistent")
    if fsize > len(data):
        raise TruncatedChunk(f"file chunk of {fsize} bytes overruns {len(data)}-byte buffer")
    end = fsize

    pool: Optional[StringPool] = None
    resource_map: list[int] = []
    namespaces: dict[str, str] = {}
    warnings: list[str] = []
    roots: list[AxmlElement] = []
    stack: list[AxmlElement] = []

    def need_pool() -> StringPool:
        if pool is None:
            raise BadStringIndex("element chunk before string pool")
        return pool

    off = fhsize
    while off < end:
        ctype, hsize, csize = _chunk_header(data, off, end)
        r = _Reader(data, off, off + csize)

        if ctype == RES_STRING_POOL_TYPE:
            if pool is None:
                pool = parse_string_pool(data, off, hsize, csize)
            else:
                warnings.append(f"extra string pool at {off} ignored")
        elif ctype == RES_XML_RESOURCE_MAP_TYPE:
            n = (csize - hsize) // 4
            resource_map = list(r.unpack(f"<{n}I", off + hsize)) if n else []
        elif ctype in (RES_XML_START_NAMESPACE_TYPE, RES_XML_END_NAMESPACE_TYPE):
            prefix_idx, uri_idx = r.unpack("<II", off + hsize)
            if ctype == RES_XML_START_NAMESPACE_TYPE:
                p = need_pool()
                try:
                    uri, prefix = p.get(uri_idx), p.get(prefix_idx)
                except BadStringIndex as exc:
                    warnings.append(f"namespace at {off}: {exc}")
                else:
                    if uri is not None:
                        namespaces[uri] = prefix or ""
        elif ctype == RES_XML_START_ELEMENT_TYPE:
            p = need_pool()
            line, = r.unpack("<I", off + 8)
            ext = off + hsize
            ns_idx, name_idx, attr_start, attr_size, attr_count = r.unpack("<IIHHH", ext)
            elem = AxmlElement(p.get(ns_idx), p.get(name_idx) or "", line=line)
            stride = attr_size or 20
            for i in range(attr_count):
                a_off = ext + attr_start + i * stride
                a_ns, a_name, a_raw, _vsize, _res0, vtype, vdata = r.unpack("<IIIHBBI", a_off)
                try:
                    attr = AxmlAttribute(
                        ns_idx=a_ns, name_idx=a_name, raw_value_idx=a_raw,
                        value_type=vtype, value_data=vdata,
                        resource_id=resource_map[a_name] if a_name < len(resource_map) else None,
                        namespace=p.get(a_ns), name=p.get(a_name) or "", raw_value=p.get(a_raw),
                    )
                    if vtype == TYPE_STRING:
                        p.get(vdata)
                except BadStringIndex as exc:
                    warnings.append(f"<{elem.name}> attribute {i}: {exc}")
                    continue
                elem.attributes.append(attr)
            if stack:
                stack[-1].children.append(elem)
            else:
                roots.append(elem)
            stack.append(elem)
        elif ctype == RES_XML_END_ELEMENT_TYPE:
            if stack:
                stack.pop()
            else:
                warnings.append(f"unmatched end element at {off}")
        elif ctype == RES_XML_CDATA_TYPE:
            pass
        else:
            warnings.append(f"skipped unknown chunk 0x{ctype:04x} at {off}")
        off += csize

    if stack:
        warnings.append(f"{len(stack)} element(s) left open at end of document")
    return ManifestDocument(
        pool=pool if pool is not None else StringPool([]),
        roots=roots,
        resource_map=resource_map,
        namespaces=namespaces,
        warnings=warnings,
    )
