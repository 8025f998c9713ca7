import dataclasses
import hashlib
import json
import math

import numpy as np
import pytest

from adpir.errors import ConfigError, UnsatisfiableNoiseBudget
from adpir.pir import LatticeConfig, PirDatabase, PirParams, pir_init
from adpir.pir import lattice
from adpir.pir.params import (
    DEFAULT_FAILURE_BOUND,
    cell_layout,
    choose_dims,
    failure_log2,
    make_lattice_config,
    noise_variances,
    query_rows,
)
from adpir.rng import Csprng

# frozen: blake2b-8 over the canonical JSON of PirParams('trivial', 3, 3)
TRIVIAL_3x3_HASH = "795e2495126d82c7"


def test_default_lattice_config():
    cfg = LatticeConfig()
    assert cfg.modulus == 2**32 and cfg.log_q == 32
    assert cfg.secret_dimension == 1024
    assert cfg.eta == 24 and cfg.noise_variance == 12
    assert cfg.gadget_skip_bits == 10


@pytest.mark.parametrize("kw", [
    {"modulus": 3 * 2**20},
    {"modulus": 2**33},
    {"secret_dimension": 1000},
    {"noise_stddev": 0},
    {"hypercube_dims": (4, 4, 4, 4)},
    {"hypercube_dims": (0, 4)},
    {"gadget_base_bits": 20, "gadget_levels": 2},
    {"reply_modulus_bits": 8},
])
def test_invalid_lattice_configs(kw):
    with pytest.raises(ConfigError):
        LatticeConfig(**kw)


@pytest.mark.parametrize("size,g,polys", [(32, 28, 1), (1024, 1, 2), (1020, 1, 1), (34560, 1, 34)])
def test_cell_layout_arithmetic(size, g, polys):
    lay = cell_layout(size, 4096, LatticeConfig())
    assert lay.slot_bytes == size + 4
    assert lay.records_per_cell == g
    assert lay.polys_per_cell == polys
    assert lay.num_cells == math.ceil(4096 / g)
    assert lay.locate(g + 1) == (1, 1) if g > 1 else lay.locate(5) == (5, 0)


def test_params_hash_is_canonical_json_digest():
    p = PirParams("trivial", 3, 3)
    canonical = json.dumps(p.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    assert p.hash == hashlib.blake2b(canonical, digest_size=8).digest()
    assert p.hash.hex() == TRIVIAL_3x3_HASH


def test_params_roundtrip_and_version_binding():
    p = PirParams("lattice", 64, 100, LatticeConfig(hypercube_dims=(10, 10)))
    assert PirParams.from_bytes(p.to_bytes()) == p
    bumped = dataclasses.replace(p, db_version=1)
    assert bumped.hash != p.hash


def test_params_reject_small_hypercube():
    with pytest.raises(ConfigError):
        PirParams("lattice", 1024, 100, LatticeConfig(hypercube_dims=(9, 10)))
    with pytest.raises(ConfigError):
        PirParams("lattice", 1024, 100)
    with pytest.raises(ConfigError):
        PirParams("trivial", 0, 1)


def test_choose_dims_for_4096_records_of_1k():
    cfg = make_lattice_config(1024, 4096)
    dims = cfg.hypercube_dims
    assert math.prod(dims) >= 4096
    assert 1 <= len(dims) <= 3
    assert failure_log2(cfg, dims, 2) <= -40


def test_choose_dims_minimizes_query_rows():
    cfg = LatticeConfig()
    dims = choose_dims(1000, cfg, 1, DEFAULT_FAILURE_BOUND)
    best = query_rows(cfg, dims)
    for d1 in range(1, 60):
        for d2 in range(2, 40):
            d3 = math.ceil(1000 / (d1 * d2))
            cand = (d1, d2, d3) if d3 > 1 else (d1, d2)
            if failure_log2(cfg, cand, 1) <= -40:
                assert query_rows(cfg, cand) >= best


def test_unsatisfiable_budget():
    with pytest.raises(UnsatisfiableNoiseBudget):
        make_lattice_config(1024, 4096, failure_bound=2.0**-1000)
    with pytest.raises(ConfigError):
        make_lattice_config(1024, 4096, failure_bound=0.0)
    with pytest.raises(UnsatisfiableNoiseBudget):
        make_lattice_config(32, 64, LatticeConfig(hypercube_dims=(64,), reply_modulus_bits=10))


def test_pir_init_shapes_match_database():
    db = PirDatabase([bytes([i % 256]) * 1024 for i in range(4096)])
    params, st = pir_init(0, db, "lattice", seed=b"s")
    assert params.num_records == 4096 and params.record_size_bytes == 1024
    assert math.prod(params.lattice.hypercube_dims) >= params.layout.num_cells
    assert failure_log2(params.lattice, params.lattice.hypercube_dims,
                        params.layout.polys_per_cell) <= math.log2(2.0**-40)
    assert len(st.secret_key) == 1024


def test_noise_budget_dominates_observed_noise():
    """Measured reply noise (at the reply modulus) stays under the analytic variance."""
    n = 16
    rng = np.random.default_rng(5)
    records = [rng.integers(0, 256, 60, dtype=np.uint8).tobytes() for _ in range(n)]
    cfg = LatticeConfig(hypercube_dims=(4, 2, 2), records_per_cell=1)
    db = PirDatabase(records)
    params, st = pir_init(0, db, "lattice", config=cfg, seed=b"noise")
    prep = db.prepared(params)
    key = lattice.SecretKey.from_bytes(st.secret_key)
    bits = params.lattice.reply_modulus_bits
    errors = []
    for j in range(n):
        payload = lattice.build_query(params, key, j, Csprng(b"q%d" % j))
        raw = np.frombuffer(lattice.answer(prep, payload), dtype="<u2").astype(np.int64)
        ct = raw.reshape(2, params.layout.polys_per_cell, 1024)
        phase = (ct[1] - key.times(ct[0], bits).astype(np.int64)) % (1 << bits)
        cell = np.zeros(1024, dtype=np.int64)
        rec = records[j] + lattice.checksum(params.hash, j, records[j])
        cell[:len(rec)] = np.frombuffer(rec, dtype=np.uint8).view(np.int8)
        ideal = cell * (1 << (bits - 8))
        err = (phase - ideal + (1 << (bits - 1))) % (1 << bits) - (1 << (bits - 1))
        errors.append(err)
    observed = np.var(np.concatenate(errors))
    predicted = sum(noise_variances(params.lattice, params.lattice.hypercube_dims).values())
    assert observed <= predicted
    assert np.abs(np.concatenate(errors)).max() < 1 << (bits - 9)
