"""Little-endian cursor used by the binary embedding/prompt-matrix formats."""

from __future__ import annotations

import struct


class FormatError(ValueError):
    """A binary file violates its declared layout."""


class Reader:
    def __init__(self, data: bytes, label: str, error_cls: type[FormatError] = FormatError):
        self.data = data
        self.pos = 0
        self.label = label
        self.error_cls = error_cls

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise self.error_cls(f"{self.label}: truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise self.error_cls(
                f"{self.label}: {len(self.data) - self.pos} trailing bytes after last record"
            )


def read_id(reader: Reader) -> str:
    id_len = reader.u16("record id length")
    raw = reader.take(id_len, "record id")
    if b"\x00" in raw:
        raise reader.error_cls(f"{reader.label}: record id contains NUL")
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise reader.error_cls(f"{reader.label}: record id is not valid UTF-8") from exc


def encode_id(record_id: str, label: str, error_cls: type[FormatError] = FormatError) -> bytes:
    raw = record_id.encode("utf-8")
    if not raw:
        raise error_cls(f"{label}: record id must be non-empty")
    if b"\x00" in raw:
        raise error_cls(f"{label}: record id must not contain NUL")
    if len(raw) > 0xFFFF:
        raise error_cls(f"{label}: record id longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw
