"""Ads, update batches and the category-indexed AdCatalog."""
from __future__ import annotations

import dataclasses
import enum
import os
import struct
import time
from typing import Iterable, Sequence

from adpir.catalog.tree import IndexTree, TreeHeader
from adpir.errors import BucketOverflow, ConfigError, RemoveUnknownAd, AdpirError
from adpir.pir import PirDatabase

AD_ID_BYTES = 16
DEFAULT_K = 30
DEFAULT_PAYLOAD_BYTES = 1024
DEFAULT_DEPTH = 8
LOGIC_BYTES = 104
MAX_DEPTH = 32

# flags u8 | ad id | category length u8 | category bits u32 | logic length u16 | logic
_AD_HEADER = struct.Struct(f"<B{AD_ID_BYTES}sBIH{LOGIC_BYTES}s")
AD_HEADER_BYTES = _AD_HEADER.size
_LIVE = 1


class DuplicateAd(AdpirError, KeyError):
    pass


def check_category(bits: str, depth: int) -> str:
    if len(bits) != depth or any(c not in "01" for c in bits):
        raise ConfigError(f"category {bits!r} is not a {depth}-bit string")
    return bits


@dataclasses.dataclass(frozen=True)
class CatalogConfig:
    depth: int = DEFAULT_DEPTH
    k: int = DEFAULT_K
    ad_payload_bytes: int = DEFAULT_PAYLOAD_BYTES
    feature_dim: int = 1024
    hyperplane_seed: bytes = bytes(32)
    eviction: str = "fifo"

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"depth must be in [1, {MAX_DEPTH}]")
        if not 1 <= self.k < 1 << 16:
            raise ConfigError("k must fit in 16 bits")
        if self.ad_payload_bytes < 1:
            raise ConfigError("ad_payload_bytes must be positive")
        if len(self.hyperplane_seed) != 32:
            raise ConfigError("hyperplane seed must be 32 bytes")
        if self.eviction not in ("fifo", "reject"):
            raise ConfigError(f"unknown eviction policy {self.eviction!r}")

    @property
    def slot_bytes(self) -> int:
        return AD_HEADER_BYTES + self.ad_payload_bytes

    @property
    def bucket_bytes(self) -> int:
        return self.k * self.slot_bytes

    @classmethod
    def with_random_seed(cls, **kw) -> "CatalogConfig":
        return cls(hyperplane_seed=os.urandom(32), **kw)


@dataclasses.dataclass(frozen=True)
class AdRecord:
    ad_id: bytes
    category: str
    matching_logic: bytes = b""
    payload: bytes = b""
    filler: bool = False

    def normalized(self, payload_bytes: int) -> "AdRecord":
        p = self.payload[:payload_bytes].ljust(payload_bytes, b"\0")
        return dataclasses.replace(self, payload=p)


class UpdateOp(enum.IntEnum):
    ADD = 1
    REMOVE = 2
    UPDATE = 3


@dataclasses.dataclass(frozen=True)
class UpdateEntry:
    """One advertiser instruction: operation, ad metadata and ad data.

    For ``REMOVE`` only ``ad_id`` is meaningful and ``data`` must be empty.
    For ``UPDATE`` a ``category`` of ``None`` keeps the ad where it is.
    """

    op: UpdateOp
    ad_id: bytes
    category: str | None = None
    matching_logic: bytes = b""
    data: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "op", UpdateOp(self.op))
        if len(self.ad_id) != AD_ID_BYTES:
            raise ConfigError(f"ad id must be {AD_ID_BYTES} bytes")
        if self.op is UpdateOp.REMOVE and self.data:
            raise ConfigError("remove entries carry no data")
        if self.op is UpdateOp.ADD and self.category is None:
            raise ConfigError("add entries need a category")
        if len(self.matching_logic) > LOGIC_BYTES:
            raise ConfigError(f"matching logic longer than {LOGIC_BYTES} bytes")


# bucket serialization -------------------------------------------------------

def _pack_category(bits: str) -> int:
    return int(bits, 2) if bits else 0


def _unpack_category(value: int, length: int) -> str:
    return format(value, f"0{length}b") if length else ""


def serialize_ad(ad: AdRecord, cfg: CatalogConfig) -> bytes:
    ad = ad.normalized(cfg.ad_payload_bytes)
    head = _AD_HEADER.pack(
        0 if ad.filler else _LIVE,
        ad.ad_id,
        len(ad.category),
        _pack_category(ad.category),
        len(ad.matching_logic),
        ad.matching_logic,
    )
    return head + ad.payload


def deserialize_ad(data: bytes, cfg: CatalogConfig) -> AdRecord:
    flags, ad_id, clen, cbits, llen, logic = _AD_HEADER.unpack_from(data)
    return AdRecord(
        ad_id=ad_id,
        category=_unpack_category(cbits, clen),
        matching_logic=logic[:llen],
        payload=bytes(data[AD_HEADER_BYTES:AD_HEADER_BYTES + cfg.ad_payload_bytes]),
        filler=not flags & _LIVE,
    )


def filler_ad(category: str) -> AdRecord:
    return AdRecord(bytes(AD_ID_BYTES), category, filler=True)


def serialize_bucket(ads: Sequence[AdRecord], category: str, cfg: CatalogConfig) -> bytes:
    """Exactly ``k`` slots: live ads in insertion order, then flagged fillers."""
    if len(ads) > cfg.k:
        raise BucketOverflow(f"bucket {category!r} holds {len(ads)} > k={cfg.k} ads")
    slots = list(ads) + [filler_ad(category)] * (cfg.k - len(ads))
    out = b"".join(serialize_ad(ad, cfg) for ad in slots)
    assert len(out) == cfg.bucket_bytes
    return out


def deserialize_bucket(data: bytes, cfg: CatalogConfig, keep_fillers: bool = False) -> list[AdRecord]:
    if len(data) != cfg.bucket_bytes:
        raise ValueError(f"bucket is {len(data)} bytes, expected {cfg.bucket_bytes}")
    step = cfg.slot_bytes
    ads = [deserialize_ad(data[i:i + step], cfg) for i in range(0, len(data), step)]
    return ads if keep_fillers else [a for a in ads if not a.filler]


# catalog ----------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class EntryResult:
    index: int
    ok: bool
    error: str = ""


@dataclasses.dataclass(frozen=True)
class AdCatalog:
    """Copy-on-write catalog snapshot.

    ``order[i]`` is the category stored in bucket ``i``; ``buckets`` maps a
    category to its live ads, oldest first. Every category in ``order`` has
    at least one live ad, and the tree has exactly one leaf per bucket.
    """

    config: CatalogConfig
    order: tuple[str, ...] = ()
    buckets: dict = dataclasses.field(default_factory=dict)
    version: int = 0
    timestamp: float = 0.0
    tree: IndexTree = None

    def __post_init__(self):
        if self.tree is None:
            object.__setattr__(self, "tree", IndexTree(self.header(), {
                c: i for i, c in enumerate(self.order)}))

    @classmethod
    def empty(cls, config: CatalogConfig | None = None) -> "AdCatalog":
        return cls(config or CatalogConfig())

    def header(self) -> TreeHeader:
        c = self.config
        return TreeHeader(self.version, c.hyperplane_seed, c.depth, c.feature_dim, c.k,
                          c.ad_payload_bytes)

    def __len__(self) -> int:
        return len(self.order)

    def bucket(self, index: int) -> tuple[AdRecord, ...]:
        return self.buckets[self.order[index]]

    def index_of(self, category: str) -> int:
        return self.order.index(category)

    def find(self, ad_id: bytes) -> AdRecord | None:
        for ads in self.buckets.values():
            for ad in ads:
                if ad.ad_id == ad_id:
                    return ad
        return None

    def serialized_bucket(self, index: int) -> bytes:
        return serialize_bucket(self.bucket(index), self.order[index], self.config)


def apply_updates(cat: AdCatalog, batch: Iterable[UpdateEntry],
                  strict: bool = False) -> tuple[AdCatalog, list[EntryResult]]:
    """Apply entries in order and commit them as one new version.

    With ``strict=False`` a failing entry is skipped and reported in the
    results; with ``strict=True`` it raises and nothing is committed.
    """
    cfg = cat.config
    buckets = {c: list(ads) for c, ads in cat.buckets.items()}
    where = {ad.ad_id: c for c, ads in buckets.items() for ad in ads}
    results = []

    def insert(ad: AdRecord):
        ads = buckets.setdefault(ad.category, [])
        if len(ads) >= cfg.k:
            if cfg.eviction == "reject":
                raise BucketOverflow(f"category {ad.category!r} already holds k={cfg.k} ads")
            evicted = ads.pop(0)
            del where[evicted.ad_id]
        ads.append(ad)
        where[ad.ad_id] = ad.category

    def drop(ad_id: bytes) -> AdRecord:
        category = where.pop(ad_id)
        ads = buckets[category]
        pos = next(i for i, a in enumerate(ads) if a.ad_id == ad_id)
        return ads.pop(pos)

    for i, entry in enumerate(batch):
        try:
            if entry.op is UpdateOp.ADD:
                check_category(entry.category, cfg.depth)
                if entry.ad_id in where:
                    raise DuplicateAd(entry.ad_id)
                insert(AdRecord(entry.ad_id, entry.category, entry.matching_logic,
                                entry.data).normalized(cfg.ad_payload_bytes))
            elif entry.op is UpdateOp.REMOVE:
                if entry.ad_id not in where:
                    raise RemoveUnknownAd(entry.ad_id)
                drop(entry.ad_id)
            else:
                if entry.ad_id not in where:
                    raise RemoveUnknownAd(entry.ad_id)
                category = entry.category or where[entry.ad_id]
                check_category(category, cfg.depth)
                new = AdRecord(entry.ad_id, category, entry.matching_logic,
                               entry.data).normalized(cfg.ad_payload_bytes)
                if category == where[entry.ad_id]:
                    ads = buckets[category]
                    pos = next(j for j, a in enumerate(ads) if a.ad_id == entry.ad_id)
                    ads[pos] = new
                else:
                    old = drop(entry.ad_id)
                    try:
                        insert(new)
                    except BucketOverflow:
                        insert(old)
                        raise
            results.append(EntryResult(i, True))
        except (AdpirError, ValueError) as exc:
            if strict:
                raise
            results.append(EntryResult(i, False, f"{type(exc).__name__}: {exc}"))

    # keep bucket indices stable: emptied categories are swap-removed,
    # new categories are appended
    order = list(cat.order)
    for c in [c for c in order if not buckets.get(c)]:
        pos = order.index(c)
        order[pos] = order[-1]
        order.pop()
    for c in sorted(c for c, ads in buckets.items() if ads and c not in order):
        order.append(c)
    live = {c: tuple(buckets[c]) for c in order}

    new_version = cat.version + 1
    leaves = {c: i for i, c in enumerate(order)}
    tree = cat.tree.evolve(new_version, leaves)
    updated = AdCatalog(cfg, tuple(order), live, new_version, time.time(), tree)
    return updated, results


def update_ads(cat: AdCatalog, batch: Iterable[UpdateEntry]) -> AdCatalog:
    return apply_updates(cat, batch, strict=True)[0]


def build_pir_database(cat: AdCatalog) -> PirDatabase:
    """One PIR record per category bucket, so one query fetches all k ads."""
    return PirDatabase([cat.serialized_bucket(i) for i in range(len(cat))], version=cat.version)
