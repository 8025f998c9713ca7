import io
import struct

import pytest
from hypothesis import given, strategies as st

from adpir.catalog import EntryResult, IndexTree, UpdateEntry, UpdateOp, full_sync, tree_delta
from adpir.errors import ProtocolError
from adpir.pir import PirDatabase, pir_init
from adpir.proxy import wire
from adpir.proxy.wire import BodyTooLarge, EntryStatus, ErrorCode, MsgType

from oracles import ad_id, example_tree


def test_frame_header_is_five_bytes():
    f = wire.encode_frame(MsgType.GET_TREE, wire.encode_get_tree(0))
    assert len(f) == 13 and f[0] == 1 and f[1:5] == (8).to_bytes(4, "little")


@given(st.sampled_from(list(MsgType)), st.binary(max_size=300))
def test_frame_roundtrip(kind, body):
    f = wire.encode_frame(kind, body)
    assert wire.decode_frame(f) == (kind, body)
    assert wire.read_frame(io.BytesIO(f)) == (kind, body)


def test_stream_of_frames_then_clean_eof():
    stream = io.BytesIO(wire.encode_frame(MsgType.GET_TREE, b"x" * 8)
                        + wire.encode_frame(MsgType.ERROR, b"\x01"))
    assert wire.read_frame(stream)[0] is MsgType.GET_TREE
    assert wire.read_frame(stream) == (MsgType.ERROR, b"\x01")
    assert wire.read_frame(stream) is None


def test_oversized_body_rejected_before_reading():
    class NoBody(io.BytesIO):
        def read(self, n=-1):
            if self.tell() >= wire.FRAME.size:
                raise AssertionError("body must not be read")
            return super().read(n)

    head = wire.FRAME.pack(MsgType.PIR_QUERY, 1 << 30)
    with pytest.raises(BodyTooLarge):
        wire.read_frame(NoBody(head), max_body=1 << 20)
    with pytest.raises(BodyTooLarge):
        wire.decode_frame(head, max_body=1 << 20)


@pytest.mark.parametrize("data", [b"\x01\x08", wire.FRAME.pack(99, 0),
                                  wire.FRAME.pack(1, 8) + b"short"])
def test_malformed_frames(data):
    with pytest.raises(ProtocolError):
        wire.decode_frame(data)


def test_mid_frame_close():
    with pytest.raises(EOFError):
        wire.read_frame(io.BytesIO(wire.FRAME.pack(1, 8) + b"abc"))


def test_get_tree_body():
    assert wire.decode_get_tree(wire.encode_get_tree(2**40 + 3)) == 2**40 + 3
    with pytest.raises(ProtocolError):
        wire.decode_get_tree(b"\0" * 4)


def test_tree_response_with_and_without_params():
    t = example_tree()
    params, _ = pir_init(0, PirDatabase([b"ab"] * 3, version=1), "lattice", seed=b"w")
    sync, got = wire.decode_tree_response(wire.encode_tree_response(full_sync(t), params))
    assert got == params
    assert IndexTree.deserialize(sync.tree_bytes).leaves == t.leaves
    sync, got = wire.decode_tree_response(wire.encode_tree_response(tree_delta(t, 1), None))
    assert got is None and sync.is_empty
    with pytest.raises(ProtocolError):
        wire.decode_tree_response(struct.pack("<I", 50) + b"x")
    with pytest.raises(ProtocolError):
        wire.decode_tree_response(wire.encode_tree_response(full_sync(t), None) + b"{bad")


def test_upload_roundtrip():
    batch = [
        UpdateEntry(UpdateOp.ADD, ad_id(1), "0101", b"\x01\x01a\x01b", b"payload"),
        UpdateEntry(UpdateOp.REMOVE, ad_id(2)),
        UpdateEntry(UpdateOp.UPDATE, ad_id(3), None, b"", b"new"),
        UpdateEntry(UpdateOp.ADD, ad_id(4), "000000000001", b"", b""),
    ]
    token, back = wire.decode_upload(wire.encode_upload(b"secret", batch))
    assert token == b"secret" and back == batch


@pytest.mark.parametrize("cut", [1, 7, 20])
def test_truncated_upload(cut):
    body = wire.encode_upload(b"t", [UpdateEntry(UpdateOp.ADD, ad_id(1), "01", b"", b"xyz")])
    with pytest.raises(ProtocolError):
        wire.decode_upload(body[:-cut])
    with pytest.raises(ProtocolError):
        wire.decode_upload(body + b"\0")


def test_ack_and_statuses():
    results = [EntryResult(0, True), EntryResult(1, False, "RemoveUnknownAd: 00"),
               EntryResult(2, False, "BucketOverflow: full")]
    version, statuses = wire.decode_ack(wire.encode_ack(9, results))
    assert version == 9
    assert statuses == [EntryStatus.OK, EntryStatus.REMOVE_UNKNOWN_AD, EntryStatus.REJECTED]
    with pytest.raises(ProtocolError):
        wire.decode_ack(wire.encode_ack(9, results)[:-1])


def test_error_body():
    assert wire.decode_error(wire.encode_error(ErrorCode.STALE_PARAMS, "old")) == (
        ErrorCode.STALE_PARAMS, "old")
    with pytest.raises(ProtocolError):
        wire.decode_error(b"")
