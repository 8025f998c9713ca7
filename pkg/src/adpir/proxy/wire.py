"""Length-prefixed binary framing between clients, advertisers and the proxy.

Frame: ``msg_type u8 | body length u32 LE | body``.

Bodies:

    GetTree       t u64
    TreeResponse  sync length u32 | tree sync payload | PIR params (json)
    PirQueryMsg   serialized PirQuery
    PirReplyMsg   serialized PirReply
    UploadBatch   token length u16 | token | entry count u32 | entries
                  entry: op u8 | ad id 16 B | category length u8 | category u32
                         | logic length u16 | logic | data length u32 | data
    UploadAck     version u64 | entry count u32 | status u8 per entry
    Error         code u8 | utf-8 message
"""
from __future__ import annotations

import enum
import struct
from typing import BinaryIO, Sequence

from adpir.catalog import AD_ID_BYTES, EntryResult, TreeSync, UpdateEntry, UpdateOp
from adpir.errors import ProtocolError
from adpir.pir import PirParams

FRAME = struct.Struct("<BI")
DEFAULT_MAX_BODY = 64 << 20


class MsgType(enum.IntEnum):
    GET_TREE = 1
    TREE_RESPONSE = 2
    PIR_QUERY = 3
    PIR_REPLY = 4
    UPLOAD_BATCH = 5
    UPLOAD_ACK = 6
    ERROR = 7


class ErrorCode(enum.IntEnum):
    MALFORMED_QUERY = 1
    STALE_PARAMS = 2
    UNAUTHORIZED = 3
    BAD_REQUEST = 4
    INTERNAL = 5


class EntryStatus(enum.IntEnum):
    OK = 0
    REMOVE_UNKNOWN_AD = 1
    REJECTED = 2


class BodyTooLarge(ProtocolError):
    pass


def encode_frame(msg_type: MsgType, body: bytes) -> bytes:
    return FRAME.pack(int(msg_type), len(body)) + body


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise EOFError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


def read_frame(stream: BinaryIO, max_body: int = DEFAULT_MAX_BODY) -> tuple[MsgType, bytes] | None:
    """Next frame from ``stream``; ``None`` on a clean close between frames.

    Oversized bodies raise :class:`BodyTooLarge` before the body is read.
    """
    head = stream.read(FRAME.size)
    if not head:
        return None
    if len(head) < FRAME.size:
        head += _read_exact(stream, FRAME.size - len(head))
    kind, length = FRAME.unpack(head)
    if length > max_body:
        raise BodyTooLarge(f"body of {length} bytes exceeds limit {max_body}")
    try:
        kind = MsgType(kind)
    except ValueError:
        raise ProtocolError(f"unknown message type {kind}") from None
    return kind, _read_exact(stream, length)


def decode_frame(data: bytes, max_body: int = DEFAULT_MAX_BODY) -> tuple[MsgType, bytes]:
    if len(data) < FRAME.size:
        raise ProtocolError("truncated frame header")
    kind, length = FRAME.unpack_from(data)
    if length > max_body:
        raise BodyTooLarge(f"body of {length} bytes exceeds limit {max_body}")
    if len(data) != FRAME.size + length:
        raise ProtocolError("frame length mismatch")
    try:
        kind = MsgType(kind)
    except ValueError:
        raise ProtocolError(f"unknown message type {kind}") from None
    return kind, data[FRAME.size:]


# bodies ---------------------------------------------------------------------

def encode_get_tree(t: int) -> bytes:
    return struct.pack("<Q", t)


def decode_get_tree(body: bytes) -> int:
    if len(body) != 8:
        raise ProtocolError("GetTree body must be 8 bytes")
    return struct.unpack("<Q", body)[0]


def encode_tree_response(sync: TreeSync, params: PirParams | None) -> bytes:
    """An empty catalog has no PIR params; the params section is then empty."""
    data = sync.to_bytes()
    return struct.pack("<I", len(data)) + data + (params.to_bytes() if params else b"")


def decode_tree_response(body: bytes) -> tuple[TreeSync, PirParams | None]:
    if len(body) < 4:
        raise ProtocolError("truncated TreeResponse")
    (n,) = struct.unpack_from("<I", body)
    if len(body) < 4 + n:
        raise ProtocolError("truncated TreeResponse")
    rest = body[4 + n:]
    try:
        params = PirParams.from_bytes(rest) if rest else None
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"bad params in TreeResponse: {exc}") from None
    return TreeSync.from_bytes(body[4:4 + n]), params


_ENTRY = struct.Struct(f"<B{AD_ID_BYTES}sBIH")


def encode_upload(token: bytes, batch: Sequence[UpdateEntry]) -> bytes:
    out = bytearray(struct.pack("<H", len(token)) + token)
    out += struct.pack("<I", len(batch))
    for e in batch:
        cat = e.category or ""
        out += _ENTRY.pack(int(e.op), e.ad_id, len(cat), int(cat, 2) if cat else 0,
                           len(e.matching_logic))
        out += e.matching_logic
        out += struct.pack("<I", len(e.data)) + e.data
    return bytes(out)


def decode_upload(body: bytes) -> tuple[bytes, list[UpdateEntry]]:
    try:
        (tlen,) = struct.unpack_from("<H", body)
        token = body[2:2 + tlen]
        pos = 2 + tlen
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        batch = []
        for _ in range(count):
            op, ad_id, clen, cval, llen = _ENTRY.unpack_from(body, pos)
            pos += _ENTRY.size
            logic = body[pos:pos + llen]
            pos += llen
            (dlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            data = body[pos:pos + dlen]
            pos += dlen
            category = format(cval, f"0{clen}b") if clen else None
            batch.append(UpdateEntry(UpdateOp(op), ad_id, category, logic, data))
    except (struct.error, ValueError) as exc:
        raise ProtocolError(f"bad upload body: {exc}") from None
    if pos != len(body):
        raise ProtocolError("trailing bytes in upload body")
    return token, batch


def status_for(result: EntryResult) -> EntryStatus:
    if result.ok:
        return EntryStatus.OK
    if result.error.startswith("RemoveUnknownAd"):
        return EntryStatus.REMOVE_UNKNOWN_AD
    return EntryStatus.REJECTED


def encode_ack(version: int, results: Sequence[EntryResult]) -> bytes:
    return struct.pack("<QI", version, len(results)) + bytes(status_for(r) for r in results)


def decode_ack(body: bytes) -> tuple[int, list[EntryStatus]]:
    if len(body) < 12:
        raise ProtocolError("truncated UploadAck")
    version, count = struct.unpack_from("<QI", body)
    if len(body) != 12 + count:
        raise ProtocolError("bad UploadAck length")
    return version, [EntryStatus(b) for b in body[12:]]


def encode_error(code: ErrorCode, message: str) -> bytes:
    return bytes([code]) + message.encode()


def decode_error(body: bytes) -> tuple[ErrorCode, str]:
    if not body:
        raise ProtocolError("empty Error body")
    return ErrorCode(body[0]), body[1:].decode(errors="replace")
