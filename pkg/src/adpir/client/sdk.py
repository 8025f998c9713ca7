"""Client protocol driver: tree sync, private bucket fetch, local ad picking.

Only two kinds of message ever leave the client: ``GetTree(t)`` carrying
the last synced tree version, and the PIR query blob. The category, the
bucket index and the profile stay local.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from adpir.catalog import (
    AdRecord,
    CatalogConfig,
    IndexTree,
    TreeHeader,
    UpdateEntry,
    apply_sync,
    deserialize_bucket,
    get_index,
)
from adpir.client.matching import matches
from adpir.errors import (
    ConfigError,
    EmptyStash,
    MalformedQuery,
    ProtocolError,
    StaleParams,
    Unauthorized,
    UnknownVersion,
)
from adpir.lsh import HyperplaneSet, PreferenceProfile, get_category
from adpir.pir import PirClientState, PirParams, PirReply, client_state, pir_extract, pir_query
from adpir.proxy import wire
from adpir.proxy.wire import EntryStatus, ErrorCode, MsgType

log = logging.getLogger("adpir.client")

# (profile, hyperplanes, fetch counter) -> category bitstring
RotationHook = Callable[[PreferenceProfile, HyperplaneSet, int], str]


def top_category(profile: PreferenceProfile, planes: HyperplaneSet, fetch_no: int) -> str:
    return get_category(profile, planes)


def round_robin(m: int) -> RotationHook:
    """Cycle through the categories of the ``m`` heaviest features, one per fetch.

    Falls back to the whole-profile category when the profile has no
    explicit features.
    """
    if m < 1:
        raise ConfigError("round robin needs m >= 1")

    def hook(profile: PreferenceProfile, planes: HyperplaneSet, fetch_no: int) -> str:
        ranked = sorted(profile.features.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:m]
        if not ranked:
            return get_category(profile, planes)
        token, weight = ranked[fetch_no % len(ranked)]
        return get_category(PreferenceProfile({token: weight}, profile.dim), planes)

    return hook


@dataclasses.dataclass
class ClientState:
    profile: PreferenceProfile
    tree: Optional[IndexTree] = None
    params: Optional[PirParams] = None
    pir_state: Optional[PirClientState] = dataclasses.field(default=None, repr=False)
    stash: list[AdRecord] = dataclasses.field(default_factory=list)
    fetches: int = 0

    @property
    def tree_version(self) -> int:
        return self.tree.version if self.tree is not None else 0


def catalog_config(header: TreeHeader) -> CatalogConfig:
    return CatalogConfig(depth=header.depth, k=header.k, ad_payload_bytes=header.ad_payload_bytes,
                         feature_dim=header.feature_dim, hyperplane_seed=header.hyperplane_seed)


def raise_for_error(body: bytes):
    code, message = wire.decode_error(body)
    exc = {
        ErrorCode.STALE_PARAMS: StaleParams,
        ErrorCode.MALFORMED_QUERY: MalformedQuery,
        ErrorCode.UNAUTHORIZED: Unauthorized,
    }.get(code, ProtocolError)
    raise exc(message)


def _expect(got: tuple[MsgType, bytes], kind: MsgType) -> bytes:
    got_kind, body = got
    if got_kind is MsgType.ERROR:
        raise_for_error(body)
    if got_kind is not kind:
        raise ProtocolError(f"expected {kind.name}, got {got_kind.name}")
    return body


class Client:
    """Stateful client bound to one transport.

    A background prefetcher and a foreground ``pick_ad`` caller may share
    one instance; every public method holds the instance lock.
    """

    def __init__(self, transport, profile: PreferenceProfile, *, auto_fetch: bool = True,
                 rotation: RotationHook = top_category, seed: bytes | None = None):
        self.transport = transport
        self.state = ClientState(profile)
        self.auto_fetch = auto_fetch
        self.rotation = rotation
        self._seed = seed
        self._lock = threading.RLock()
        self._planes: HyperplaneSet | None = None
        self.last_pick_matched: bool | None = None

    # step 2 ----------------------------------------------------------------------

    def sync_tree(self) -> ClientState:
        with self._lock:
            st = self.state
            sync, params = wire.decode_tree_response(_expect(
                self.transport.request(MsgType.GET_TREE, wire.encode_get_tree(st.tree_version)),
                MsgType.TREE_RESPONSE))
            try:
                st.tree = apply_sync(st.tree, sync)
            except UnknownVersion:
                # local copy diverged from what the proxy thinks we hold
                st.tree = None
                return self.sync_tree()
            self._install_params(params)
            return st

    def _install_params(self, params: PirParams | None):
        st = self.state
        if params is None:
            st.params = st.pir_state = None
            return
        if st.params is not None and st.params.hash == params.hash:
            return
        seed = None
        if self._seed is not None:
            seed = hashlib.sha256(self._seed + params.hash).digest()
        st.params = params
        st.pir_state = client_state(params, seed)

    def hyperplanes(self) -> HyperplaneSet:
        h = self.state.tree.header
        if (self._planes is None or self._planes.seed != h.hyperplane_seed
                or self._planes.bits != h.depth or self._planes.dim != h.feature_dim):
            self._planes = HyperplaneSet(h.hyperplane_seed, h.depth, h.feature_dim)
        return self._planes

    # steps 3-6 -------------------------------------------------------------------

    def current_category(self) -> str:
        st = self.state
        return self.rotation(st.profile, self.hyperplanes(), st.fetches)

    def fetch_bucket(self) -> ClientState:
        with self._lock:
            if self.state.tree is None:
                self.sync_tree()
            try:
                ads = self._fetch_once()
            except StaleParams:
                log.info("params changed since last sync; re-syncing once")
                self.sync_tree()
                ads = self._fetch_once()
            st = self.state
            st.stash.extend(ads)
            st.fetches += 1
            return st

    def _fetch_once(self) -> list[AdRecord]:
        st = self.state
        if st.pir_state is None:
            raise EmptyStash("proxy catalog is empty")
        index = get_index(st.tree, self.current_category())
        query = pir_query(index, st.pir_state)
        body = _expect(self.transport.request(MsgType.PIR_QUERY, query.to_bytes()),
                       MsgType.PIR_REPLY)
        record = pir_extract(PirReply.from_bytes(body), st.pir_state)
        return deserialize_bucket(record, catalog_config(st.tree.header))

    # step 7 ----------------------------------------------------------------------

    def pick_ad(self, context: Mapping[str, str] | None = None) -> AdRecord:
        """First stash ad whose predicate holds; the oldest ad if none does."""
        with self._lock:
            st = self.state
            if not st.stash and self.auto_fetch:
                self.fetch_bucket()
            if not st.stash:
                raise EmptyStash("no ads in the local stash")
            return pick_from_stash(st.stash, context or {}, self)


def pick_from_stash(stash: list[AdRecord], context: Mapping[str, str], owner=None) -> AdRecord:
    for i, ad in enumerate(stash):
        if matches(ad.matching_logic, context):
            if owner is not None:
                owner.last_pick_matched = True
            return stash.pop(i)
    log.info("no stash ad matched the context; returning the oldest")
    if owner is not None:
        owner.last_pick_matched = False
    return stash.pop(0)


# advertiser side ------------------------------------------------------------------

def upload_batch(transport, token: bytes, batch: Sequence[UpdateEntry]) -> tuple[int, list[EntryStatus]]:
    body = _expect(transport.request(MsgType.UPLOAD_BATCH, wire.encode_upload(token, batch)),
                   MsgType.UPLOAD_ACK)
    return wire.decode_ack(body)


# persistence for the command line ----------------------------------------------------

STATE_FILE = "client.json"


def save_state(state: ClientState, directory) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "tree": state.tree.serialize().hex() if state.tree else None,
        "fetches": state.fetches,
        "stash": [{
            "ad_id": ad.ad_id.hex(),
            "category": ad.category,
            "matching_logic": ad.matching_logic.hex(),
            "payload": ad.payload.hex(),
        } for ad in state.stash],
    }
    path = root / STATE_FILE
    path.write_text(json.dumps(doc))
    return path


def load_state(directory, profile: PreferenceProfile | None = None) -> ClientState:
    doc = json.loads((Path(directory) / STATE_FILE).read_text())
    tree = IndexTree.deserialize(bytes.fromhex(doc["tree"])) if doc["tree"] else None
    stash = [AdRecord(bytes.fromhex(a["ad_id"]), a["category"], bytes.fromhex(a["matching_logic"]),
                      bytes.fromhex(a["payload"])) for a in doc["stash"]]
    return ClientState(profile or PreferenceProfile({}), tree, stash=stash, fetches=doc["fetches"])


# prefetch scheduling --------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PrefetchConfig:
    fetches_per_day: int = 10
    k: int = 30

    def __post_init__(self):
        if self.fetches_per_day < 1 or self.k < 1:
            raise ConfigError("fetches_per_day and k must be positive")

    @property
    def interval_seconds(self) -> float:
        return 86400.0 / self.fetches_per_day

    @property
    def ads_per_day(self) -> int:
        return self.fetches_per_day * self.k


class Prefetcher:
    """Fixed-interval background ``fetch_bucket`` calls, decoupled from page views."""

    def __init__(self, client: Client, config: PrefetchConfig = PrefetchConfig(),
                 interval: float | None = None):
        self.client = client
        self.interval = config.interval_seconds if interval is None else interval
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self.errors: list[Exception] = []

    def _run(self):
        while not self._stop.is_set():
            try:
                self.client.fetch_bucket()
            except Exception as exc:  # keep prefetching after transient failures
                log.warning("prefetch failed: %s", exc)
                self.errors.append(exc)
            self._stop.wait(self.interval)

    def start(self) -> "Prefetcher":
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        self._thread.join()


__all__ = [
    "Client", "ClientState", "PrefetchConfig", "Prefetcher", "RotationHook", "catalog_config", "load_state", "pick_from_stash", "round_robin", "save_state",
    "top_category", "upload_batch",
]
