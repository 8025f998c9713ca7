"""IndexTree: binary tree from category bitstrings to catalog bucket indices.

Only paths leading to a live category exist (a pruned complete tree of
depth ``b``). The tree is versioned together with the catalog and keeps a
bounded history of leaf changes so clients can sync incrementally.

Sync payload layout (little-endian):

    header: version u64 | hyperplane seed 32 B | depth u8 | feature dim u32
            | k u16 | ad payload bytes u32
    nodes, preorder from the root: flags u8 (bit0 child '0', bit1 child '1',
            bit2 leaf, bit3 labelled) [label: u8 length + utf-8]
            [leaf: bucket index as LEB128 varint]
"""
from __future__ import annotations

import dataclasses
import enum
import math
import struct
from functools import cached_property
from typing import Mapping, Optional

from adpir.errors import EmptyTree, PathMissing, ProtocolError, UnknownVersion

_HEADER = struct.Struct("<Q32sBIHI")
HEADER_BYTES = _HEADER.size
HISTORY_LIMIT = 1024

_HAS0, _HAS1, _LEAF, _LABEL = 1, 2, 4, 8


def _put_varint(out: bytearray, value: int):
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _get_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = shift = 0
    while True:
        if pos >= len(data):
            raise ProtocolError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            return value, pos


def varint_len(value: int) -> int:
    return max(1, math.ceil(value.bit_length() / 7))


@dataclasses.dataclass(frozen=True)
class TreeHeader:
    version: int
    hyperplane_seed: bytes
    depth: int
    feature_dim: int
    k: int
    ad_payload_bytes: int

    def pack(self) -> bytes:
        return _HEADER.pack(self.version, self.hyperplane_seed, self.depth, self.feature_dim,
                            self.k, self.ad_payload_bytes)

    @classmethod
    def unpack(cls, data: bytes, pos: int = 0) -> "TreeHeader":
        if len(data) - pos < HEADER_BYTES:
            raise ProtocolError("truncated tree header")
        return cls(*_HEADER.unpack_from(data, pos))


@dataclasses.dataclass(frozen=True)
class Node:
    path: str
    label: str
    index: Optional[int]
    children: tuple[str, ...]

    @property
    def is_leaf(self) -> bool:
        return self.index is not None


@dataclasses.dataclass(frozen=True)
class Change:
    """Net change of one leaf (``kind='leaf'``) or node label (``kind='label'``)."""

    kind: str
    path: str
    old: object
    new: object


@dataclasses.dataclass(frozen=True)
class IndexTree:
    header: TreeHeader
    leaves: Mapping[str, int]
    labels: Mapping[str, str] = dataclasses.field(default_factory=dict)
    # (version, changes) for each version after the oldest retained one
    history: tuple = ()
    history_base: int = 0

    @property
    def version(self) -> int:
        return self.header.version

    @property
    def depth(self) -> int:
        return self.header.depth

    @cached_property
    def nodes(self) -> frozenset:
        paths = {""}
        for leaf in self.leaves:
            paths.update(leaf[:i] for i in range(1, len(leaf) + 1))
        return frozenset(paths)

    def node(self, path: str) -> Node:
        if path not in self.nodes:
            raise PathMissing(path)
        children = tuple(b for b in "01" if path + b in self.nodes)
        return Node(path, self.labels.get(path, ""), self.leaves.get(path), children)

    def evolve(self, version: int, leaves: Mapping[str, int],
               labels: Mapping[str, str] | None = None) -> "IndexTree":
        """Successor tree at ``version`` with the change set recorded in history."""
        labels = dict(self.labels if labels is None else labels)
        leaves = dict(leaves)
        changes = []
        for path in sorted(set(self.leaves) | set(leaves)):
            old, new = self.leaves.get(path), leaves.get(path)
            if old != new:
                changes.append(Change("leaf", path, old, new))
        for path in sorted(set(self.labels) | set(labels)):
            old, new = self.labels.get(path, ""), labels.get(path, "")
            if old != new:
                changes.append(Change("label", path, old, new))
        history = self.history + ((version, tuple(changes)),)
        base = self.history_base if self.history else self.version
        while len(history) > HISTORY_LIMIT:
            base = history[0][0]
            history = history[1:]
        header = dataclasses.replace(self.header, version=version)
        return IndexTree(header, leaves, labels, history, base)

    # serialization ---------------------------------------------------------

    def serialize(self) -> bytes:
        out = bytearray(self.header.pack())
        self._write_nodes(out)
        return bytes(out)

    def _write_nodes(self, out: bytearray) -> None:
        stack = [""]
        while stack:
            path = stack.pop()
            flags = 0
            if path + "0" in self.nodes:
                flags |= _HAS0
            if path + "1" in self.nodes:
                flags |= _HAS1
            index = self.leaves.get(path)
            if index is not None:
                flags |= _LEAF
            label = self.labels.get(path, "")
            if label:
                flags |= _LABEL
            out.append(flags)
            if label:
                raw = label.encode()
                out.append(len(raw))
                out += raw
            if index is not None:
                _put_varint(out, index)
            if flags & _HAS1:
                stack.append(path + "1")
            if flags & _HAS0:
                stack.append(path + "0")

    @classmethod
    def deserialize(cls, data: bytes) -> "IndexTree":
        header = TreeHeader.unpack(data)
        pos = HEADER_BYTES
        leaves, labels = {}, {}
        stack = [""]
        while stack:
            path = stack.pop()
            if pos >= len(data):
                raise ProtocolError("truncated node list")
            flags = data[pos]
            pos += 1
            if flags & _LABEL:
                n = data[pos]
                labels[path] = data[pos + 1:pos + 1 + n].decode()
                pos += 1 + n
            if flags & _LEAF:
                leaves[path], pos = _get_varint(data, pos)
            if flags & _HAS1:
                stack.append(path + "1")
            if flags & _HAS0:
                stack.append(path + "0")
        if pos != len(data):
            raise ProtocolError("trailing bytes after node list")
        return cls(header, leaves, labels)

    def structural_size_bits(self) -> int:
        """Serialized node-list size in bits, header and label bytes excluded."""
        if not self.leaves:
            return 8
        return 8 * (len(self.nodes) + sum(varint_len(i) for i in self.leaves.values()))


def tree_size_bits(k_leaves: int) -> int:
    """``(2k-1) * ceil(log2(2k-1))`` with the logarithm floored at 1 bit."""
    if k_leaves < 1:
        raise ValueError("need at least one leaf")
    nodes = 2 * k_leaves - 1
    return nodes * max(1, math.ceil(math.log2(nodes)))


# lookup -----------------------------------------------------------------------

def search(tree: IndexTree, bits: str) -> Node:
    """Walk from the root, 0 = left and 1 = right; the reached node."""
    if len(bits) > tree.depth:
        raise ValueError(f"path longer than tree depth {tree.depth}")
    return tree.node(bits)


def _leftmost_leaf(tree: IndexTree, path: str) -> int:
    while path not in tree.leaves:
        path += "0" if path + "0" in tree.nodes else "1"
    return tree.leaves[path]


def get_index(tree: IndexTree, category: str) -> int:
    """Bucket index for ``category``.

    Exact leaf hits return their own index. Otherwise descend to the
    deepest existing ancestor, step into the sibling subtree of the missing
    edge, and take its leftmost leaf.
    """
    if not tree.leaves:
        raise EmptyTree("index tree has no leaves")
    if category in tree.leaves:
        return tree.leaves[category]
    path = ""
    for bit in category:
        if path + bit not in tree.nodes:
            other = "1" if bit == "0" else "0"
            return _leftmost_leaf(tree, path + other)
        path += bit
    return _leftmost_leaf(tree, path)


# incremental sync ---------------------------------------------------------------

class SyncKind(enum.IntEnum):
    FULL = 1
    DELTA = 2


_LEAF_SET, _LEAF_DEL, _LABEL_SET = 1, 2, 3


@dataclasses.dataclass(frozen=True)
class TreeSync:
    """Either a full tree or the net changes since ``from_version``."""

    kind: SyncKind
    header: TreeHeader
    from_version: int = 0
    changes: tuple[Change, ...] = ()
    tree_bytes: bytes = b""

    def to_bytes(self) -> bytes:
        if self.kind is SyncKind.FULL:
            return bytes([SyncKind.FULL]) + self.tree_bytes
        out = bytearray([SyncKind.DELTA])
        out += self.header.pack()
        out += struct.pack("<QI", self.from_version, len(self.changes))
        for ch in self.changes:
            if ch.kind == "leaf":
                op = _LEAF_DEL if ch.new is None else _LEAF_SET
            else:
                op = _LABEL_SET
            out += struct.pack("<BBI", op, len(ch.path), int(ch.path, 2) if ch.path else 0)
            if op == _LEAF_SET:
                _put_varint(out, ch.new)
            elif op == _LABEL_SET:
                raw = ch.new.encode()
                out.append(len(raw))
                out += raw
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TreeSync":
        if not data:
            raise ProtocolError("empty sync payload")
        kind = SyncKind(data[0])
        if kind is SyncKind.FULL:
            tree_bytes = bytes(data[1:])
            return cls(kind, TreeHeader.unpack(tree_bytes), tree_bytes=tree_bytes)
        header = TreeHeader.unpack(data, 1)
        pos = 1 + HEADER_BYTES
        from_version, count = struct.unpack_from("<QI", data, pos)
        pos += 12
        changes = []
        for _ in range(count):
            op, plen, pval = struct.unpack_from("<BBI", data, pos)
            pos += 6
            path = format(pval, f"0{plen}b") if plen else ""
            if op == _LEAF_SET:
                value, pos = _get_varint(data, pos)
                changes.append(Change("leaf", path, None, value))
            elif op == _LEAF_DEL:
                changes.append(Change("leaf", path, None, None))
            elif op == _LABEL_SET:
                n = data[pos]
                changes.append(Change("label", path, None, data[pos + 1:pos + 1 + n].decode()))
                pos += 1 + n
            else:
                raise ProtocolError(f"unknown delta op {op}")
        if pos != len(data):
            raise ProtocolError("trailing bytes after delta")
        return cls(kind, header, from_version, tuple(changes))

    @property
    def is_empty(self) -> bool:
        return self.kind is SyncKind.DELTA and not self.changes


def full_sync(tree: IndexTree) -> TreeSync:
    data = tree.serialize()
    return TreeSync(SyncKind.FULL, tree.header, tree_bytes=data)


def tree_delta(tree: IndexTree, t: int) -> TreeSync:
    """Changes a client holding version ``t`` needs to reach ``tree``.

    ``t == 0``, versions newer than the tree and versions older than the
    retained history all get the full tree.
    """
    if t == 0 or t > tree.version or (t < tree.version and t < tree.history_base):
        return full_sync(tree)
    net: dict[tuple[str, str], list] = {}
    for version, changes in tree.history:
        if version <= t:
            continue
        for ch in changes:
            key = (ch.kind, ch.path)
            if key in net:
                net[key][1] = ch.new
            else:
                net[key] = [ch.old, ch.new]
    out = [Change(kind, path, old, new) for (kind, path), (old, new) in sorted(net.items())
           if old != new]
    return TreeSync(SyncKind.DELTA, tree.header, t, tuple(out))


def apply_sync(tree: IndexTree | None, sync: TreeSync) -> IndexTree:
    if sync.kind is SyncKind.FULL:
        return IndexTree.deserialize(sync.tree_bytes)
    if tree is None or tree.version != sync.from_version:
        have = None if tree is None else tree.version
        raise UnknownVersion(f"delta from version {sync.from_version} applied to {have}")
    leaves = dict(tree.leaves)
    labels = dict(tree.labels)
    for ch in sync.changes:
        if ch.kind == "leaf":
            if ch.new is None:
                leaves.pop(ch.path, None)
            else:
                leaves[ch.path] = ch.new
        elif ch.new:
            labels[ch.path] = ch.new
        else:
            labels.pop(ch.path, None)
    return IndexTree(sync.header, leaves, labels)
