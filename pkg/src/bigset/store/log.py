"""Append-only log backend: an in-memory index rebuilt from a batch log on open.

Record framing::

    payload_len:u32be  crc32(payload):u32be  payload

    payload := n_ops:u32be op*
    op      := 0x01 klen:u32be key vlen:u32be value     (put)
             | 0x02 klen:u32be key                      (delete)

A record that is short or fails its checksum ends the log; the file is
truncated there on open. Compaction rewrites the log with live keys only.
"""

from __future__ import annotations

import os
import struct
import zlib

from bigset.store.memory import MemoryStore, StoreError

_HEADER = struct.Struct(">II")
_U32 = struct.Struct(">I")
_PUT = 1
_DELETE = 2


def encode_record(puts: list[tuple[bytes, bytes]], deletes: list[bytes]) -> bytes:
    parts = [_U32.pack(len(puts) + len(deletes))]
    for key in deletes:
        parts += [bytes((_DELETE,)), _U32.pack(len(key)), key]
    for key, value in puts:
        parts += [bytes((_PUT,)), _U32.pack(len(key)), key, _U32.pack(len(value)), value]
    payload = b"".join(parts)
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def _apply_payload(payload: bytes, data) -> None:
    (n,) = _U32.unpack_from(payload, 0)
    pos = 4
    for _ in range(n):
        tag = payload[pos]
        (klen,) = _U32.unpack_from(payload, pos + 1)
        pos += 5
        key = payload[pos:pos + klen]
        pos += klen
        if tag == _PUT:
            (vlen,) = _U32.unpack_from(payload, pos)
            pos += 4
            data[key] = payload[pos:pos + vlen]
            pos += vlen
        elif tag == _DELETE:
            data.pop(key, None)
        else:
            raise ValueError(f"unknown op tag {tag}")
    if pos != len(payload):
        raise ValueError("trailing bytes in record")


class LogStore(MemoryStore):
    """Durable store; every batch is one checksummed log record."""

    def __init__(self, path: str | os.PathLike) -> None:
        super().__init__()
        self.path = os.fspath(path)
        self.truncated_bytes = 0
        self._replay()
        self._fh = open(self.path, "ab")

    def _replay(self) -> None:
        if not os.path.exists(self.path):
            open(self.path, "wb").close()
            return
        with open(self.path, "rb") as fh:
            blob = fh.read()
        pos = 0
        while pos + _HEADER.size <= len(blob):
            length, crc = _HEADER.unpack_from(blob, pos)
            payload = blob[pos + _HEADER.size:pos + _HEADER.size + length]
            if len(payload) != length or zlib.crc32(payload) != crc:
                break
            try:
                _apply_payload(payload, self._data)
            except (ValueError, IndexError, struct.error):
                break
            pos += _HEADER.size + length
        if pos != len(blob):
            self.truncated_bytes = len(blob) - pos
            with open(self.path, "r+b") as fh:
                fh.truncate(pos)

    def _persist(self, puts, deletes) -> None:
        record = encode_record(puts, deletes)
        if self._fh.closed:
            raise StoreError("log file is closed")
        offset = self._fh.tell()
        try:
            self._fh.write(record)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            try:
                self._fh.truncate(offset)
            except OSError:
                pass
            raise StoreError(f"log append failed: {exc}") from exc

    def _drop(self, keys: list[bytes]) -> None:
        gone = set(keys)
        live = [(k, v) for k, v in self._data.items() if k not in gone]
        tmp = self.path + ".compact"
        try:
            with open(tmp, "wb") as fh:
                if live:
                    fh.write(encode_record(live, []))
                fh.flush()
                os.fsync(fh.fileno())
            self._fh.close()
            os.replace(tmp, self.path)
        except OSError as exc:
            raise StoreError(f"compaction rewrite failed: {exc}") from exc
        finally:
            if self._fh.closed:
                self._fh = open(self.path, "ab")
        for key in keys:
            del self._data[key]

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
        super().close()
