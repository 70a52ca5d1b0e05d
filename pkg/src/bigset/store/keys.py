"""Order-preserving composite keys for bigset data.

Layout of one encoded key::

    esc(set) 00 01 kind [esc(element) 00 01 esc(actor) 00 01 event:u64be]

``esc`` rewrites every 0x00 byte as 00 FF, so a field terminator (00 01)
sorts below any continuation of the field and a decoded field is never
ambiguous. For one set the clock key (kind 01) sorts before the tombstone
key (02), which sorts before every element key (03), and element keys
order by (element, actor, event).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from bigset.clock import MAX_EVENT, ContractError, Dot, trusted_dot

TERMINATOR = b"\x00\x01"
_ESCAPED_ZERO = b"\x00\xff"
_U64 = struct.Struct(">Q")


class Kind(enum.IntEnum):
    CLOCK = 1
    TOMBSTONE = 2
    ELEMENT = 3


@dataclass(frozen=True)
class BigsetKey:
    set: bytes
    kind: Kind
    element: bytes | None = None
    dot: Dot | None = None

    def __post_init__(self) -> None:
        if (self.kind == Kind.ELEMENT) != (self.element is not None and self.dot is not None):
            raise ContractError(f"element and dot are required exactly for element keys: {self!r}")
        if self.kind != Kind.ELEMENT and (self.element is not None or self.dot is not None):
            raise ContractError(f"{self.kind.name} key cannot carry element or dot")

    def sort_key(self) -> tuple:
        """Tuple whose natural order matches the encoded byte order."""
        if self.kind == Kind.ELEMENT:
            return (self.set, int(self.kind), self.element, self.dot.actor, self.dot.event)
        return (self.set, int(self.kind))

    def encode(self) -> bytes:
        return encode_key(self)


def clock_key(set_name: bytes) -> BigsetKey:
    return BigsetKey(set_name, Kind.CLOCK)


def tombstone_key(set_name: bytes) -> BigsetKey:
    return BigsetKey(set_name, Kind.TOMBSTONE)


def element_key(set_name: bytes, element: bytes, dot: Dot) -> BigsetKey:
    return BigsetKey(set_name, Kind.ELEMENT, element, dot)


def _esc(field: bytes) -> bytes:
    return field.replace(b"\x00", _ESCAPED_ZERO) + TERMINATOR


def encode_key(key: BigsetKey) -> bytes:
    head = _esc(key.set) + bytes((key.kind,))
    if key.kind != Kind.ELEMENT:
        return head
    if key.dot.event > MAX_EVENT:
        raise ContractError("event overflows 64 bits")
    return head + _esc(key.element) + _esc(key.dot.actor) + _U64.pack(key.dot.event)


def _read_field(data: bytes, pos: int) -> tuple[bytes, int]:
    out = bytearray()
    while True:
        i = data.find(b"\x00", pos)
        if i < 0 or i + 1 >= len(data):
            raise ValueError("unterminated key field")
        out += data[pos:i]
        marker = data[i + 1]
        if marker == 0x01:
            return bytes(out), i + 2
        if marker != 0xFF:
            raise ValueError(f"bad escape byte {marker:#x} at {i + 1}")
        out.append(0)
        pos = i + 2


def decode_key(data: bytes) -> BigsetKey:
    head = data[:-8]
    if head.count(0) == 3:
        # Common case: the only zero bytes are the three terminators.
        parts = head.split(TERMINATOR)
        if len(parts) == 4 and parts[1][:1] == b"\x03" and parts[3] == b"":
            (event,) = _U64.unpack_from(data, len(data) - 8)
            if event and parts[2]:
                return BigsetKey(parts[0], Kind.ELEMENT, parts[1][1:], trusted_dot(parts[2], event))
    set_name, pos = _read_field(data, 0)
    if pos >= len(data):
        raise ValueError("missing kind byte")
    try:
        kind = Kind(data[pos])
    except ValueError:
        raise ValueError(f"unknown key kind {data[pos]}") from None
    pos += 1
    if kind != Kind.ELEMENT:
        if pos != len(data):
            raise ValueError("trailing bytes after clock key")
        return BigsetKey(set_name, kind)
    element, pos = _read_field(data, pos)
    actor, pos = _read_field(data, pos)
    if len(data) - pos != 8:
        raise ValueError("element key must end with an 8-byte event")
    (event,) = _U64.unpack_from(data, pos)
    return BigsetKey(set_name, kind, element, Dot(actor, event))


def set_prefix(set_name: bytes) -> bytes:
    return _esc(set_name)


def elements_start(set_name: bytes) -> bytes:
    return _esc(set_name) + bytes((Kind.ELEMENT,))


def element_prefix(set_name: bytes, element: bytes) -> bytes:
    """Every key of ``element`` in ``set_name`` starts with these bytes."""
    return elements_start(set_name) + _esc(element)


def prefix_end(prefix: bytes) -> bytes:
    """Smallest byte string greater than every string starting with ``prefix``."""
    p = prefix.rstrip(b"\xff")
    if not p:
        raise ValueError("prefix has no finite upper bound")
    return p[:-1] + bytes((p[-1] + 1,))
