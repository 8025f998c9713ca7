"""Ad matching logic: conjunctive predicates over a key/value context.

Encoding is a sequence of tag-length-value clauses, all of which must hold:

    EQ      0x01 | key length u8 | key | value length u8 | value
    PRESENT 0x02 | key length u8 | key

An empty blob is the always-true predicate.
"""
from __future__ import annotations

import enum
from typing import Mapping, Sequence


class Clause(enum.IntEnum):
    EQ = 1
    PRESENT = 2


class BadPredicate(ValueError):
    pass


def _field(data: bytes, pos: int) -> tuple[str, int]:
    if pos >= len(data):
        raise BadPredicate("truncated clause")
    n = data[pos]
    end = pos + 1 + n
    if end > len(data):
        raise BadPredicate("truncated clause field")
    return data[pos + 1:end].decode(), end


def encode_predicate(clauses: Sequence[tuple]) -> bytes:
    """``[("eq", key, value), ("present", key), ...]`` to bytes."""
    out = bytearray()
    for clause in clauses:
        kind, key, *rest = clause
        raw = key.encode()
        if kind == "eq":
            val = rest[0].encode()
            out += bytes([Clause.EQ, len(raw)]) + raw + bytes([len(val)]) + val
        elif kind == "present":
            out += bytes([Clause.PRESENT, len(raw)]) + raw
        else:
            raise BadPredicate(f"unknown clause kind {kind!r}")
    return bytes(out)


def decode_predicate(data: bytes) -> list[tuple]:
    clauses, pos = [], 0
    while pos < len(data):
        tag = data[pos]
        key, pos = _field(data, pos + 1)
        if tag == Clause.EQ:
            value, pos = _field(data, pos)
            clauses.append(("eq", key, value))
        elif tag == Clause.PRESENT:
            clauses.append(("present", key))
        else:
            raise BadPredicate(f"unknown clause tag {tag}")
    return clauses


def matches(logic: bytes, context: Mapping[str, str]) -> bool:
    """True when every clause holds; undecodable logic never matches."""
    try:
        clauses = decode_predicate(logic)
    except (BadPredicate, UnicodeDecodeError):
        return False
    for clause in clauses:
        if clause[0] == "eq" and context.get(clause[1]) != clause[2]:
            return False
        if clause[0] == "present" and clause[1] not in context:
            return False
    return True


def parse_context(text: str) -> dict[str, str]:
    """``"k=v,k2=v2"`` to a dict; bare keys map to the empty string."""
    ctx = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, _, value = part.partition("=")
        ctx[key.strip()] = value.strip()
    return ctx
