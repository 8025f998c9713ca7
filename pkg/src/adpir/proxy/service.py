"""Request handling for the proxy, independent of the transport.

Every request reads one immutable :class:`Snapshot` (catalog, tree, PIR
database, PIR params) and never looks at anything else, so a query is
answered against exactly one catalog version. Uploads are serialized by a
writer lock, build a complete new snapshot, then publish it with a single
reference assignment.

Request logs go to the ``adpir.proxy`` logger. Each record carries only
the message type, body lengths and timing (as ``extra`` attributes), never
query contents.
"""
from __future__ import annotations

import dataclasses
import logging
import threading
import time
from pathlib import Path
from typing import Iterable, Optional, Sequence

from adpir.catalog import (
    AdCatalog,
    EntryResult,
    IndexTree,
    UpdateEntry,
    append_journal,
    apply_updates,
    build_pir_database,
    save_catalog,
    tree_delta,
)
from adpir.errors import AdpirError, MalformedQuery, ProtocolError, StaleParams, Unauthorized
from adpir.pir import Backend, LatticeConfig, PirDatabase, PirParams, PirQuery, pir_reply
from adpir.pir.api import pir_init
from adpir.proxy import wire
from adpir.proxy.wire import ErrorCode, MsgType

log = logging.getLogger("adpir.proxy")


@dataclasses.dataclass(frozen=True)
class Snapshot:
    catalog: AdCatalog
    db: Optional[PirDatabase]
    params: Optional[PirParams]

    @property
    def tree(self) -> IndexTree:
        return self.catalog.tree

    @property
    def version(self) -> int:
        return self.catalog.version


def build_snapshot(catalog: AdCatalog, backend: Backend,
                   lattice_config: LatticeConfig | None = None) -> Snapshot:
    """PIR database and params for ``catalog``; lattice encodings are built eagerly."""
    if not len(catalog):
        return Snapshot(catalog, None, None)
    db = build_pir_database(catalog)
    params, _ = pir_init(0, db, backend, config=lattice_config)
    if params.backend is Backend.LATTICE:
        db.prepared(params)
    return Snapshot(catalog, db, params)


class ProxyService:
    """Catalog host answering tree sync, PIR queries and advertiser uploads."""

    def __init__(
        self,
        catalog: AdCatalog,
        backend="lattice",
        tokens: Iterable[bytes] = (),
        catalog_dir: str | Path | None = None,
        lattice_config: LatticeConfig | None = None,
        max_body: int = wire.DEFAULT_MAX_BODY,
    ):
        self.backend = Backend.parse(backend)
        self.lattice_config = lattice_config
        self.tokens = frozenset(bytes(t) for t in tokens)
        self.catalog_dir = Path(catalog_dir) if catalog_dir else None
        self.max_body = max_body
        self._writer = threading.Lock()
        self._snapshot = build_snapshot(catalog, self.backend, lattice_config)

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    # handlers -----------------------------------------------------------------

    def handle_get_tree(self, t: int) -> bytes:
        snap = self._snapshot
        return wire.encode_tree_response(tree_delta(snap.tree, t), snap.params)

    def handle_pir_query(self, q: PirQuery) -> bytes:
        snap = self._snapshot
        if snap.params is None:
            raise StaleParams("catalog is empty; nothing to query")
        return pir_reply(q, snap.db, snap.params).to_bytes()

    def handle_upload(self, batch: Sequence[UpdateEntry], token: bytes) -> tuple[int, list[EntryResult]]:
        if bytes(token) not in self.tokens:
            raise Unauthorized("advertiser token not on the allow-list")
        with self._writer:
            old = self._snapshot
            catalog, results = apply_updates(old.catalog, batch)
            snap = build_snapshot(catalog, self.backend, self.lattice_config)
            if self.catalog_dir is not None:
                save_catalog(catalog, self.catalog_dir)
                append_journal(self.catalog_dir, catalog.version, batch, results)
            self._snapshot = snap
        return catalog.version, results

    # framing ------------------------------------------------------------------

    def handle_frame(self, msg_type: MsgType, body: bytes) -> tuple[MsgType, bytes]:
        """Dispatch one decoded frame; failures become ``Error`` frames."""
        start = time.perf_counter()
        try:
            kind, out = self._dispatch(msg_type, body)
        except StaleParams as exc:
            kind, out = MsgType.ERROR, wire.encode_error(ErrorCode.STALE_PARAMS, str(exc))
        except MalformedQuery as exc:
            kind, out = MsgType.ERROR, wire.encode_error(ErrorCode.MALFORMED_QUERY, str(exc))
        except Unauthorized as exc:
            kind, out = MsgType.ERROR, wire.encode_error(ErrorCode.UNAUTHORIZED, str(exc))
        except (AdpirError, ValueError) as exc:
            kind, out = MsgType.ERROR, wire.encode_error(ErrorCode.BAD_REQUEST, str(exc))
        log.info("request", extra={
            "msg_type": int(msg_type),
            "request_bytes": len(body),
            "reply_type": int(kind),
            "reply_bytes": len(out),
            "elapsed": time.perf_counter() - start,
        })
        return kind, out

    def handle_bytes(self, frame: bytes) -> bytes:
        try:
            kind, body = wire.decode_frame(frame, self.max_body)
        except ProtocolError as exc:
            return wire.encode_frame(MsgType.ERROR,
                                     wire.encode_error(ErrorCode.MALFORMED_QUERY, str(exc)))
        return wire.encode_frame(*self.handle_frame(kind, body))

    def _dispatch(self, msg_type: MsgType, body: bytes) -> tuple[MsgType, bytes]:
        if msg_type is MsgType.GET_TREE:
            return MsgType.TREE_RESPONSE, self.handle_get_tree(wire.decode_get_tree(body))
        if msg_type is MsgType.PIR_QUERY:
            return MsgType.PIR_REPLY, self.handle_pir_query(PirQuery.from_bytes(body))
        if msg_type is MsgType.UPLOAD_BATCH:
            token, batch = wire.decode_upload(body)
            version, results = self.handle_upload(batch, token)
            return MsgType.UPLOAD_ACK, wire.encode_ack(version, results)
        raise ProtocolError(f"unexpected message type {msg_type.name}")
