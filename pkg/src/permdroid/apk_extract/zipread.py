"""Minimal ZIP central-directory reader for APK containers.

Only what is needed to pull ``AndroidManifest.xml`` out of an APK: locate the
End-Of-Central-Directory record, walk the central directory, then inflate a
single entry from its local header. Sizes and CRCs are always taken from the
central directory because malformed (often deliberately so) APKs lie in their
local headers.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Union

from ..errors import BadArchive, CrcMismatch, EntryNotFound, UnsupportedMethod

EOCD_SIG = 0x06054B50
CDIR_SIG = 0x02014B50
LOCAL_SIG = 0x04034B50

EOCD_SIZE = 22
CDIR_SIZE = 46
LOCAL_SIZE = 30
MAX_COMMENT = 0xFFFF

STORED = 0
DEFLATE = 8

ArchiveSource = Union[bytes, bytearray, memoryview, str, os.PathLike, BinaryIO]


@dataclass(frozen=True)
class ZipEntryMeta:
    name: str
    method: int
    compressed_size: int
    uncompressed_size: int
    crc32: int
    local_header_offset: int
    flags: int = 0


def _as_bytes(archive: ArchiveSource) -> bytes:
    if isinstance(archive, (bytes, bytearray, memoryview)):
        return bytes(archive)
    if isinstance(archive, (str, os.PathLike)):
        with open(archive, "rb") as fh:
            return fh.read()
    return archive.read()


def _find_eocd(data: bytes) -> int:
    start = max(0, len(data) - EOCD_SIZE - MAX_COMMENT)
    pos = data.rfind(struct.pack("<I", EOCD_SIG), start)
    while pos != -1:
        if pos + EOCD_SIZE <= len(data):
            return pos
        pos = data.rfind(struct.pack("<I", EOCD_SIG), start, pos)
    raise BadArchive("no End-Of-Central-Directory record")


def _decode_name(raw: bytes, flags: int) -> str:
    # bit 11: name is UTF-8; otherwise CP437, which real APKs never rely on
    if flags & 0x800:
        return raw.decode("utf-8", errors="replace")
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("cp437")


def list_entries(archive: ArchiveSource) -> list[ZipEntryMeta]:
    data = _as_bytes(archive)
    return _list_entries(data)


def _list_entries(data: bytes) -> list[ZipEntryMeta]:
    eocd = _find_eocd(data)
    (_, _, _, _, n_total, cd_size, cd_offset, _) = struct.unpack_from("<IHHHHIIH", data, eocd)
    if cd_offset + cd_size > eocd:
        raise BadArchive("central directory overruns EOCD")

    entries = []
    pos = cd_offset
    for _ in range(n_total):
        if pos + CDIR_SIZE > eocd:
            raise BadArchive("truncated central directory")
        fields = struct.unpack_from("<IHHHHHHIIIHHHHHII", data, pos)
        if fields[0] != CDIR_SIG:
            raise BadArchive(f"bad central directory signature at {pos}")
        flags, method = fields[3], fields[4]
        crc, csize, usize = fields[7], fields[8], fields[9]
        name_len, extra_len, comment_len = fields[10], fields[11], fields[12]
        local_offset = fields[16]
        name_end = pos + CDIR_SIZE + name_len
        if name_end > eocd:
            raise BadArchive("truncated central directory name")
        name = _decode_name(data[pos + CDIR_SIZE:name_end], flags)
        entries.append(ZipEntryMeta(name, method, csize, usize, crc, local_offset, flags))
        pos = name_end + extra_len + comment_len
    return entries


def _entry_data(data: bytes, meta: ZipEntryMeta) -> bytes:
    off = meta.local_header_offset
    if off + LOCAL_SIZE > len(data):
        raise BadArchive(f"local header of {meta.name!r} out of range")
    sig, = struct.unpack_from("<I", data, off)
    if sig != LOCAL_SIG:
        raise BadArchive(f"bad local header signature for {meta.name!r}")
    name_len, extra_len = struct.unpack_from("<HH", data, off + 26)
    start = off + LOCAL_SIZE + name_len + extra_len
    end = start + meta.compressed_size
    if end > len(data):
        raise BadArchive(f"data of {meta.name!r} truncated")
    return data[start:end]


def read_entry(data: bytes, meta: ZipEntryMeta) -> bytes:
    raw = _entry_data(data, meta)
    if meta.method == STORED:
        out = raw
    elif meta.method == DEFLATE:
        inflater = zlib.decompressobj(-zlib.MAX_WBITS)
        try:
            out = inflater.decompress(raw) + inflater.flush()
        except zlib.error as exc:
            raise BadArchive(f"cannot inflate {meta.name!r}: {exc}") from None
    else:
        raise UnsupportedMethod(f"{meta.name!r} uses compression method {meta.method}")
    if zlib.crc32(out) != meta.crc32:
        raise CrcMismatch(f"{meta.name!r}: crc {zlib.crc32(out):08x} != {meta.crc32:08x}")
    return out


def read_apk_entry(archive: ArchiveSource, entry_name: str) -> bytes:
    """Return the decompressed bytes of ``entry_name``.

    Raises BadArchive, EntryNotFound, UnsupportedMethod or CrcMismatch.
    """
    data = _as_bytes(archive)
    for meta in _list_entries(data):
        if meta.name == entry_name:
            return read_entry(data, meta)
    raise EntryNotFound(entry_name)
