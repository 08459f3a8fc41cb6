"""
binio.py
--------
Little-endian binary building blocks shared by the body-model, avatar,
skin-field and checkpoint formats.

Tagged sections:   magic | (tag[4] | u64 byte length | payload)*
Keyed arrays:      magic | u32 version | u32 meta length | meta JSON |
                   u32 count | (u16 key length | key | u8 dtype | u8 ndim |
                   u32 extents[ndim] | raw data)*
"""

from __future__ import annotations

import json
import struct
from collections.abc import Iterable, Mapping
from typing import Any

import numpy as np

from utils.errors import FormatError, VersionError

_SECTION_HEAD = struct.Struct("<4sQ")

DTYPE_CODES: dict[str, int] = {"<f4": 0, "<f8": 1, "<i8": 2, "|u1": 3, "<i4": 4, "<u4": 5}
_CODE_DTYPES = {code: np.dtype(name) for name, code in DTYPE_CODES.items()}


def pack_array(array: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(array, dtype=np.dtype(dtype)).tobytes()


def unpack_array(payload: bytes, dtype: str, shape: tuple[int, ...], where: str) -> np.ndarray:
    dt = np.dtype(dtype)
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise FormatError(f"{where}: expected {expected} bytes for shape {shape}, found {len(payload)}")
    return np.frombuffer(payload, dtype=dt).reshape(shape).copy()


class SectionWriter:
    """Accumulates tagged sections behind a magic header."""

    def __init__(self, magic: bytes) -> None:
        self._parts: list[bytes] = [magic]

    def add(self, tag: str, *payloads: bytes) -> None:
        body = b"".join(payloads)
        self._parts.append(_SECTION_HEAD.pack(tag.encode("ascii"), len(body)))
        self._parts.append(body)

    def to_bytes(self) -> bytes:
        return b"".join(self._parts)


def read_sections(data: bytes, magic: bytes, required: Iterable[str]) -> dict[str, bytes]:
    if data[: len(magic)] != magic:
        raise VersionError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}")
    sections: dict[str, bytes] = {}
    offset = len(magic)
    while offset < len(data):
        if offset + _SECTION_HEAD.size > len(data):
            raise FormatError("truncated section header")
        raw_tag, length = _SECTION_HEAD.unpack_from(data, offset)
        tag = raw_tag.decode("ascii", errors="replace")
        offset += _SECTION_HEAD.size
        if offset + length > len(data):
            raise FormatError(f"truncated section {tag}: need {length} bytes, {len(data) - offset} left")
        sections[tag] = data[offset : offset + length]
        offset += length
    for tag in required:
        if tag not in sections:
            raise FormatError(f"missing section {tag}")
    return sections


class ByteReader:
    """Sequential reader with truncation diagnostics."""

    def __init__(self, data: bytes, where: str) -> None:
        self._data = data
        self._offset = 0
        self._where = where

    def take(self, n: int, what: str) -> bytes:
        if self._offset + n > len(self._data):
            raise FormatError(f"{self._where}: truncated while reading {what}")
        chunk = self._data[self._offset : self._offset + n]
        self._offset += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple[Any, ...]:
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size, what))

    def array(self, dtype: str, shape: tuple[int, ...], what: str) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
        return unpack_array(self.take(n, what), dtype, shape, f"{self._where}:{what}")

    @property
    def remaining(self) -> int:
        return len(self._data) - self._offset


def encode_keyed_arrays(
    magic: bytes,
    version: int,
    arrays: Mapping[str, np.ndarray],
    meta: Mapping[str, Any] | None = None,
) -> bytes:
    meta_bytes = json.dumps(dict(meta or {}), sort_keys=True).encode("utf-8")
    parts = [magic, struct.pack("<II", version, len(meta_bytes)), meta_bytes, struct.pack("<I", len(arrays))]
    for key in sorted(arrays):
        array = np.asarray(arrays[key])
        dtype = array.dtype.newbyteorder("<") if array.dtype.byteorder == ">" else array.dtype
        if dtype.str not in DTYPE_CODES:
            raise FormatError(f"{key}: unsupported dtype {array.dtype}")
        key_bytes = key.encode("utf-8")
        parts.append(struct.pack("<H", len(key_bytes)))
        parts.append(key_bytes)
        parts.append(struct.pack("<BB", DTYPE_CODES[dtype.str], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(pack_array(array, dtype.str))
    return b"".join(parts)


def decode_keyed_arrays(data: bytes, magic: bytes, version: int) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if data[: len(magic)] != magic:
        raise VersionError(f"bad magic {data[:len(magic)]!r}, expected {magic!r}")
    reader = ByteReader(data[len(magic) :], magic.decode("ascii"))
    found_version, meta_len = reader.unpack("<II", "header")
    if found_version != version:
        raise VersionError(f"unsupported version {found_version}, expected {version}")
    try:
        meta = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata block: {exc}") from exc
    (count,) = reader.unpack("<I", "entry count")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (key_len,) = reader.unpack("<H", "key length")
        key = reader.take(key_len, "key").decode("utf-8")
        code, ndim = reader.unpack("<BB", f"{key} dtype")
        if code not in _CODE_DTYPES:
            raise FormatError(f"{key}: unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}I", f"{key} shape") if ndim else ()
        arrays[key] = reader.array(_CODE_DTYPES[code].str, tuple(shape), key)
    if reader.remaining:
        raise FormatError(f"{reader.remaining} trailing bytes after last entry")
    return arrays, meta
