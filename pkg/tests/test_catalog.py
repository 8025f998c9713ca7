import json

import pytest
from hypothesis import given, settings, strategies as st

from adpir.catalog import (
    AdCatalog,
    AdRecord,
    CatalogConfig,
    DuplicateAd,
    UpdateEntry,
    UpdateOp,
    apply_updates,
    build_pir_database,
    deserialize_bucket,
    load_catalog,
    save_catalog,
    serialize_bucket,
    update_ads,
)
from adpir.catalog.ads import AD_HEADER_BYTES
from adpir.catalog.store import JOURNAL, append_journal
from adpir.errors import BucketOverflow, ConfigError, EmptyDatabase, RemoveUnknownAd
from adpir.pir import pir_init

CFG = CatalogConfig(depth=3, k=30, ad_payload_bytes=1024)


def aid(i: int) -> bytes:
    return i.to_bytes(16, "big")


def add(i, cat, data=b"", logic=b""):
    return UpdateEntry(UpdateOp.ADD, aid(i), cat, logic, data or b"ad%d" % i)


def test_header_is_128_bytes():
    assert AD_HEADER_BYTES == 128
    assert CFG.slot_bytes == 1152 and CFG.bucket_bytes == 30 * 1152


def test_single_add_pads_with_fillers():
    cat = update_ads(AdCatalog.empty(CFG), [add(1, "001")])
    assert cat.version == 1
    slots = deserialize_bucket(cat.serialized_bucket(cat.index_of("001")), CFG, keep_fillers=True)
    assert len(slots) == 30
    assert [s.filler for s in slots] == [False] + [True] * 29
    live = deserialize_bucket(cat.serialized_bucket(0), CFG)
    assert live[0].ad_id == aid(1) and live[0].payload.startswith(b"ad1")
    assert len(live[0].payload) == 1024


def test_remove_unknown_ad():
    with pytest.raises(RemoveUnknownAd):
        update_ads(AdCatalog.empty(CFG), [UpdateEntry(UpdateOp.REMOVE, aid(9))])


def test_remove_carries_no_data():
    with pytest.raises(ConfigError):
        UpdateEntry(UpdateOp.REMOVE, aid(1), data=b"x")


@pytest.mark.parametrize("entry", [
    lambda: UpdateEntry(UpdateOp.ADD, b"short", "001"),
    lambda: UpdateEntry(UpdateOp.ADD, aid(1), None),
    lambda: UpdateEntry(UpdateOp.ADD, aid(1), "001", b"x" * 105),
])
def test_malformed_entries(entry):
    with pytest.raises(ConfigError):
        entry()


def test_bad_category_rejected():
    with pytest.raises(ConfigError):
        update_ads(AdCatalog.empty(CFG), [add(1, "01")])
    with pytest.raises(ConfigError):
        update_ads(AdCatalog.empty(CFG), [add(1, "0a1")])


def test_fifo_eviction_by_replay():
    batch = [add(i, "010") for i in range(31)]
    cat = update_ads(AdCatalog.empty(CFG), batch)
    ids = [a.ad_id for a in cat.buckets["010"]]
    # replay: a FIFO queue of capacity k
    expected = []
    for e in batch:
        expected.append(e.ad_id)
        if len(expected) > CFG.k:
            expected.pop(0)
    assert ids == expected and aid(0) not in ids
    assert len(cat.serialized_bucket(0)) == CFG.bucket_bytes


def test_reject_policy_overflows():
    cfg = CatalogConfig(depth=3, k=2, ad_payload_bytes=8, eviction="reject")
    with pytest.raises(BucketOverflow):
        update_ads(AdCatalog.empty(cfg), [add(i, "000") for i in range(3)])
    cat, res = apply_updates(AdCatalog.empty(cfg), [add(i, "000") for i in range(3)])
    assert [r.ok for r in res] == [True, True, False]
    assert len(cat.buckets["000"]) == 2


def test_duplicate_add_rejected():
    cat = update_ads(AdCatalog.empty(CFG), [add(1, "000")])
    with pytest.raises(DuplicateAd):
        update_ads(cat, [add(1, "001")])


def test_update_in_place_and_move():
    cat = update_ads(AdCatalog.empty(CFG), [add(1, "000"), add(2, "000")])
    cat = update_ads(cat, [UpdateEntry(UpdateOp.UPDATE, aid(1), None, b"", b"new")])
    assert [a.ad_id for a in cat.buckets["000"]] == [aid(1), aid(2)]
    assert cat.find(aid(1)).payload.startswith(b"new")
    cat = update_ads(cat, [UpdateEntry(UpdateOp.UPDATE, aid(1), "111", b"", b"moved")])
    assert cat.find(aid(1)).category == "111"
    assert [a.ad_id for a in cat.buckets["000"]] == [aid(2)]
    with pytest.raises(RemoveUnknownAd):
        update_ads(cat, [UpdateEntry(UpdateOp.UPDATE, aid(5), None)])


def test_mixed_batch_reports_per_entry():
    cat = update_ads(AdCatalog.empty(CFG), [add(1, "000")])
    batch = [add(2, "001"), UpdateEntry(UpdateOp.REMOVE, aid(77)), add(3, "001")]
    new, res = apply_updates(cat, batch)
    assert [r.ok for r in res] == [True, False, True]
    assert "RemoveUnknownAd" in res[1].error
    assert new.version == 2 and len(new.buckets["001"]) == 2


def test_build_pir_database_sizes_and_roundtrip():
    cat = update_ads(AdCatalog.empty(CFG), [add(i, c) for i, c in enumerate(["000", "011", "110"])])
    db = build_pir_database(cat)
    assert len(db) == 3 and db.record_size == 30 * (1024 + 128)
    for i in range(3):
        assert tuple(deserialize_bucket(db[i], CFG)) == cat.bucket(i)


def test_empty_catalog_has_no_database():
    with pytest.raises(EmptyDatabase):
        pir_init(0, build_pir_database(AdCatalog.empty(CFG)), "trivial")


def test_bucket_serialization_rejects_overfull():
    ads = [AdRecord(aid(i), "000") for i in range(31)]
    with pytest.raises(BucketOverflow):
        serialize_bucket(ads, "000", CFG)


def test_indices_stay_stable_under_removal():
    cat = update_ads(AdCatalog.empty(CFG), [add(i, format(i, "03b")) for i in range(5)])
    assert cat.order == ("000", "001", "010", "011", "100")
    cat = update_ads(cat, [UpdateEntry(UpdateOp.REMOVE, aid(1))])
    # last bucket swapped into the hole, others untouched
    assert cat.order == ("000", "100", "010", "011")
    cat = update_ads(cat, [add(9, "111"), add(8, "101")])
    assert cat.order == ("000", "100", "010", "011", "101", "111")


def _consistent(cat: AdCatalog):
    leaves = cat.tree.leaves
    assert sorted(leaves.values()) == list(range(len(cat)))
    for path, idx in leaves.items():
        assert cat.order[idx] == path
        assert 1 <= len(cat.buckets[path]) <= cat.config.k
    sizes = {len(cat.serialized_bucket(i)) for i in range(len(cat))}
    assert sizes <= {cat.config.bucket_bytes}


ops = st.lists(st.tuples(st.sampled_from(["add", "remove", "update"]),
                         st.integers(0, 40), st.integers(0, 7)), max_size=40)


@settings(max_examples=40, deadline=None)
@given(st.lists(ops, min_size=1, max_size=5))
def test_random_histories_keep_invariants(batches):
    cfg = CatalogConfig(depth=3, k=4, ad_payload_bytes=16)
    cat = AdCatalog.empty(cfg)
    for b in batches:
        entries = []
        for op, i, c in b:
            cat_bits = format(c, "03b")
            if op == "add":
                entries.append(add(i, cat_bits))
            elif op == "remove":
                entries.append(UpdateEntry(UpdateOp.REMOVE, aid(i)))
            else:
                entries.append(UpdateEntry(UpdateOp.UPDATE, aid(i), cat_bits, b"", b"u"))
        version = cat.version
        cat, _ = apply_updates(cat, entries)
        assert cat.version == version + 1
        _consistent(cat)


def test_store_roundtrip_and_journal(tmp_path):
    cat = update_ads(AdCatalog.empty(CFG), [add(i, format(i % 8, "03b"), logic=b"\x02\x01k")
                                            for i in range(20)])
    save_catalog(cat, tmp_path)
    back = load_catalog(tmp_path)
    assert back.order == cat.order and back.version == cat.version
    assert back.buckets == cat.buckets
    assert back.tree.serialize() == cat.tree.serialize()
    # shrinking removes stale bucket files
    small = update_ads(back, [UpdateEntry(UpdateOp.REMOVE, a.ad_id) for a in back.bucket(7)])
    save_catalog(small, tmp_path)
    assert len(list((tmp_path / "buckets").glob("*.bin"))) == 7
    batch = [add(100, "000"), UpdateEntry(UpdateOp.REMOVE, aid(999))]
    _, res = apply_updates(small, batch)
    append_journal(tmp_path, 3, batch, res)
    lines = [json.loads(x) for x in (tmp_path / JOURNAL).read_text().splitlines()]
    assert [(x["op"], x["ok"]) for x in lines] == [("add", True), ("remove", False)]


def test_catalog_scale_arithmetic():
    # 4096 buckets of 30 x 1 KiB payload: ~120 MiB of payload, ~135 MiB with headers
    cfg = CatalogConfig(depth=12)
    assert 4096 * 30 * 1024 / 2**20 == 120
    assert 4096 * cfg.bucket_bytes / 2**20 == 135


def test_random_seed_config():
    a, b = CatalogConfig.with_random_seed(), CatalogConfig.with_random_seed()
    assert a.hyperplane_seed != b.hyperplane_seed
    with pytest.raises(ConfigError):
        CatalogConfig(eviction="lru")
