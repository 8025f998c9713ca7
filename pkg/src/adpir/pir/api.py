"""Stateless single-server PIR: init / query / reply / extract."""
from __future__ import annotations

import dataclasses
import struct
import threading
from typing import Optional, Sequence

from adpir.errors import (
    ConfigError,
    DecryptionFailure,
    EmptyDatabase,
    IndexOutOfRange,
    MalformedQuery,
    StaleParams,
)
from adpir.pir import lattice
from adpir.pir.params import (
    DEFAULT_FAILURE_BOUND,
    Backend,
    LatticeConfig,
    PirParams,
    failure_log2,
    make_lattice_config,
)
from adpir.rng import Csprng

_HEADER = struct.Struct("<B8sI")


class PirDatabase:
    """Immutable array of equal-length byte records.

    Lattice encodings are cached per parameter hash so a snapshot shared
    between request handlers is encoded once.
    """

    def __init__(self, records: Sequence[bytes], version: int = 0):
        records = [bytes(r) for r in records]
        if not records:
            raise EmptyDatabase("database has no records")
        size = len(records[0])
        if size == 0 or any(len(r) != size for r in records):
            raise EmptyDatabase("records must be non-empty and share one length")
        self._records = tuple(records)
        self.record_size = size
        self.version = version
        self._prepared: dict[bytes, lattice.PreparedDatabase] = {}
        self._lock = threading.Lock()

    @property
    def records(self) -> tuple[bytes, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, j: int) -> bytes:
        return self._records[j]

    def prepared(self, params: PirParams) -> lattice.PreparedDatabase:
        key = params.hash
        with self._lock:
            prep = self._prepared.get(key)
            if prep is None:
                prep = lattice.PreparedDatabase(params, self._records)
                self._prepared[key] = prep
            return prep


@dataclasses.dataclass
class PirClientState:
    params: PirParams
    secret_key: bytes
    session_nonce: bytes
    rng: Csprng = dataclasses.field(repr=False)
    pending_index: Optional[int] = None

    def __post_init__(self):
        self._key = lattice.SecretKey.from_bytes(self.secret_key) if self.secret_key else None


@dataclasses.dataclass(frozen=True)
class _Message:
    backend: Backend
    params_hash: bytes
    payload: bytes

    def to_bytes(self) -> bytes:
        return _HEADER.pack(int(self.backend), self.params_hash, len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes):
        if len(data) < _HEADER.size:
            raise MalformedQuery("truncated header")
        backend, phash, length = _HEADER.unpack_from(data)
        if len(data) != _HEADER.size + length:
            raise MalformedQuery(f"declared payload {length} bytes, got {len(data) - _HEADER.size}")
        try:
            backend = Backend(backend)
        except ValueError:
            raise MalformedQuery(f"unknown backend id {backend}") from None
        return cls(backend, phash, bytes(data[_HEADER.size:]))

    def __len__(self) -> int:
        return _HEADER.size + len(self.payload)


class PirQuery(_Message):
    pass


class PirReply(_Message):
    pass


def pir_init(
    c: int,
    db: PirDatabase,
    backend="lattice",
    config: LatticeConfig | None = None,
    failure_bound: float = DEFAULT_FAILURE_BOUND,
    seed: bytes | None = None,
) -> tuple[PirParams, PirClientState]:
    """Derive public parameters for ``db`` and a fresh client state.

    ``config`` overrides the lattice defaults; leaving its hypercube empty
    lets the shape be chosen for this database. ``seed`` pins the client
    randomness (tests only).
    """
    if not isinstance(db, PirDatabase):
        db = PirDatabase(db)
    backend = Backend.parse(backend)
    lat = None
    if backend is Backend.LATTICE:
        lat = make_lattice_config(db.record_size, len(db), config, failure_bound)
    params = PirParams(
        backend=backend,
        record_size_bytes=db.record_size,
        num_records=len(db),
        lattice=lat,
        failure_bound=failure_bound,
        client_storage=c,
        db_version=db.version,
    )
    return params, client_state(params, seed)


def client_state(params: PirParams, seed: bytes | None = None) -> PirClientState:
    """Fresh client state for parameters received from a server."""
    rng = Csprng(seed)
    key = b""
    if params.backend is Backend.LATTICE:
        key = lattice.SecretKey.generate(params.lattice.secret_dimension, rng.fork(b"key")).to_bytes()
    return PirClientState(params, key, rng.bytes(16), rng)


def pir_query(j: int, st: PirClientState) -> PirQuery:
    params = st.params
    if not 0 <= j < params.num_records:
        raise IndexOutOfRange(f"index {j} outside [0, {params.num_records})")
    st.pending_index = j
    if params.backend is Backend.TRIVIAL:
        return PirQuery(params.backend, params.hash, b"")
    payload = lattice.build_query(params, st._key, j, st.rng)
    return PirQuery(params.backend, params.hash, payload)


def pir_reply(q: PirQuery, db: PirDatabase, params: PirParams) -> PirReply:
    """Server answer; a pure function of ``(q, db, params)``."""
    if q.params_hash != params.hash:
        raise StaleParams("query parameters do not match the served database")
    if q.backend is not params.backend:
        raise MalformedQuery("backend mismatch")
    if len(db) != params.num_records or db.record_size != params.record_size_bytes:
        raise ConfigError("database shape does not match parameters")
    if params.backend is Backend.TRIVIAL:
        if q.payload:
            raise MalformedQuery("trivial queries carry no payload")
        return PirReply(params.backend, params.hash, b"".join(db.records))
    payload = lattice.answer(db.prepared(params), q.payload)
    return PirReply(params.backend, params.hash, payload)


def pir_extract(r: PirReply, st: PirClientState) -> bytes:
    params = st.params
    j = st.pending_index
    if j is None:
        raise DecryptionFailure("no outstanding query in this state")
    if r.params_hash != params.hash or r.backend is not params.backend:
        raise DecryptionFailure("reply was produced for different parameters")
    if params.backend is Backend.TRIVIAL:
        size = params.record_size_bytes
        if len(r.payload) != size * params.num_records:
            raise DecryptionFailure("reply length does not match parameters")
        return r.payload[j * size:(j + 1) * size]
    return lattice.decode_reply(params, st._key, r.payload, j)


def query_size(params: PirParams) -> int:
    """Serialized query length for these parameters (independent of index and contents)."""
    if params.backend is Backend.TRIVIAL:
        return _HEADER.size
    return _HEADER.size + lattice.query_payload_size(params)


def reply_size(params: PirParams) -> int:
    if params.backend is Backend.TRIVIAL:
        return _HEADER.size + params.record_size_bytes * params.num_records
    return _HEADER.size + lattice.reply_payload_size(params)


def reply_expansion(params: PirParams) -> float:
    """Reply bytes over plaintext record bytes."""
    return reply_size(params) / params.record_size_bytes


def failure_probability_log2(params: PirParams) -> float:
    if params.backend is Backend.TRIVIAL:
        return float("-inf")
    cfg = params.lattice
    return failure_log2(cfg, cfg.hypercube_dims, params.layout.polys_per_cell)
