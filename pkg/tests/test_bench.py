import pytest

from adpir.bench import (
    BenchConfig,
    BenchReport,
    bench_query,
    emit_tables,
    gen_catalog,
    measured_tables,
    parse_csv,
    reference_tables,
)
from adpir.catalog import load_catalog
from adpir.errors import ConfigError


def test_gen_catalog_is_deterministic(tmp_path):
    cfg = BenchConfig(8, k=4, payload_bytes=16, seed=3)
    a, b = gen_catalog(cfg, tmp_path / "a"), gen_catalog(cfg, tmp_path / "b")
    assert a.buckets == b.buckets and a.order == b.order
    assert a.tree.serialize() == b.tree.serialize()
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert load_catalog(tmp_path / "a").buckets == a.buckets
    other = gen_catalog(BenchConfig(8, k=4, payload_bytes=16, seed=4))
    assert other.buckets != a.buckets


def test_gen_catalog_shape():
    cat = gen_catalog(BenchConfig(5, k=6, payload_bytes=8, fill=2))
    assert len(cat) == 5 and cat.config.depth == 3
    assert all(len(b) == 2 for b in cat.buckets.values())


@pytest.mark.parametrize("kw", [{"n_categories": 0}, {"n_categories": 4, "trials": 0},
                                {"n_categories": 9, "depth": 3}, {"n_categories": 2, "fill": 0},
                                {"n_categories": 2, "backend": "xor"}])
def test_bad_configs(kw):
    with pytest.raises(ConfigError):
        BenchConfig(**kw)


def test_trivial_bench_downloads_everything():
    cfg = BenchConfig(8, backend="trivial", trials=2)
    r = bench_query(cfg)
    assert r.record_bytes == 30 * 1152
    assert r.reply_payload_bytes == 8 * r.record_bytes
    assert r.ads_fetched == 2 * 30


def test_lattice_sizes_fixed_by_shape():
    shape = (4, 4)
    a = bench_query(BenchConfig(4, k=2, payload_bytes=32, trials=1, hypercube=shape))
    b = bench_query(BenchConfig(16, k=2, payload_bytes=32, trials=1, hypercube=shape))
    assert a.hypercube == b.hypercube == shape
    assert (a.query_bytes, a.reply_bytes) == (b.query_bytes, b.reply_bytes)
    assert a.ads_fetched == b.ads_fetched == 2


def test_reference_tables_values():
    tables = {t.name: t for t in reference_tables()}
    client = tables["client-cost"]
    assert [r[1] for r in client.rows] == ["0.83", "3.33", "13.33", "53.33"]
    assert tables["query-size"].rows[0][1:] == ("64.0", "128.0", "192.0")


def test_csv_roundtrip_both_modes():
    tables = reference_tables()
    assert parse_csv(emit_tables(mode="paper", fmt="csv")) == tables
    rep = BenchReport("lattice", 4, 34560, 2, 1000, 2000, 1900, (0.1, 0.2), (0.05, 0.06), 1.0)
    measured = measured_tables([rep])
    assert parse_csv(emit_tables([rep], mode="measured", fmt="csv")) == measured
    assert all(t.mode == "measured" for t in measured)
    text = emit_tables([rep], mode="measured")
    assert "client-cost [measured]" in text


def test_emit_rejects_unknown():
    with pytest.raises(ConfigError):
        emit_tables(mode="guess")
    with pytest.raises(ConfigError):
        emit_tables(fmt="xml")
