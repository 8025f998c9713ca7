"""Lattice PIR backend over the ring Z_q[X]/(X^N + 1).

The database is cut into cells (one or more records packed into whole
ring elements) laid out on a hypercube ``(d1, d2[, d3])``.

Query: for the first dimension, one RLWE encryption of ``Delta * [t == i1]``
per slot ``t``; for every later dimension, one RGSW encryption of the
indicator bit per slot. All ``a`` polynomials are expanded from a single
public seed, so only the ``b`` halves travel.

Reply: a plaintext-times-ciphertext inner product folds the first
dimension, then each later dimension is folded with external products
``sum_t RGSW(u_t) [x] ct_t``. The surviving ciphertexts are modulus
switched down before sending.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math

import numpy as np

from adpir.errors import DecryptionFailure, MalformedQuery
from adpir.pir import ring
from adpir.pir.params import CHECKSUM_BYTES, PLAINTEXT_BITS, PirParams
from adpir.rng import Csprng, expand_uniform_u32

SEED_BYTES = 32

# Evaluation-form database is kept in memory below this size.
FFT_CACHE_LIMIT = 64 << 20
# Larger databases are transformed on the fly in blocks of about this many
# input bytes, small enough to stay cache-resident.
STREAM_BLOCK_BYTES = 1 << 20


def checksum(params_hash: bytes, index: int, record: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=CHECKSUM_BYTES)
    h.update(params_hash)
    h.update(index.to_bytes(8, "little"))
    h.update(record)
    return h.digest()


@dataclasses.dataclass
class SecretKey:
    coeffs: np.ndarray  # ternary, int64, shape (N,)

    def __post_init__(self):
        self._fft = ring.forward(self.coeffs.astype(np.float64))

    @classmethod
    def generate(cls, n: int, rng: Csprng) -> "SecretKey":
        return cls(rng.ternary((n,)))

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        return cls(np.frombuffer(data, dtype=np.int8).astype(np.int64))

    def to_bytes(self) -> bytes:
        return self.coeffs.astype(np.int8).tobytes()

    def times(self, a: np.ndarray, log_q: int) -> np.ndarray:
        """``a * s mod q`` for a batch of residue polynomials."""
        return ring.round_mod(ring.inverse(ring.forward(ring.centered(a, log_q)) * self._fft), log_q)


def query_payload_size(params: PirParams) -> int:
    cfg = params.lattice
    rows = cfg.hypercube_dims[0] + 2 * cfg.gadget_levels * sum(cfg.hypercube_dims[1:])
    return SEED_BYTES + 4 * rows * cfg.secret_dimension


def _reply_word(cfg) -> np.dtype:
    return np.dtype("<u2") if cfg.reply_modulus_bits <= 16 else np.dtype("<u4")


def reply_payload_size(params: PirParams) -> int:
    cfg = params.lattice
    return 2 * params.layout.polys_per_cell * cfg.secret_dimension * _reply_word(cfg).itemsize


# client side ---------------------------------------------------------------

def build_query(params: PirParams, key: SecretKey, index: int, rng: Csprng) -> bytes:
    cfg = params.lattice
    n, log_q, dims = cfg.secret_dimension, cfg.log_q, cfg.hypercube_dims
    levels, base_bits = cfg.gadget_levels, cfg.gadget_base_bits
    cell, _ = params.layout.locate(index)
    coords = np.unravel_index(cell, dims)

    rows = dims[0] + 2 * levels * sum(dims[1:])
    seed = rng.bytes(SEED_BYTES)
    a = expand_uniform_u32(seed, (rows, n))
    msg = np.zeros((rows, n), dtype=np.int64)
    delta = 1 << (log_q - PLAINTEXT_BITS)
    msg[coords[0], 0] = delta
    row = dims[0]
    s = key.coeffs
    for k in range(1, len(dims)):
        chosen = row + 2 * levels * int(coords[k])
        for i in range(levels):
            g = 1 << (cfg.gadget_skip_bits + base_bits * i)
            msg[chosen + i, 0] = g
            msg[chosen + levels + i] = -g * s
        row += 2 * levels * dims[k]

    e = rng.centered_binomial((rows, n), cfg.eta)
    b = key.times(a, log_q).astype(np.int64) + e + msg
    b &= (1 << log_q) - 1
    return seed + b.astype("<u4").tobytes()


def decode_reply(params: PirParams, key: SecretKey, payload: bytes, index: int) -> bytes:
    cfg = params.lattice
    layout = params.layout
    if len(payload) != reply_payload_size(params):
        raise DecryptionFailure("reply length does not match parameters")
    bits = cfg.reply_modulus_bits
    ct = np.frombuffer(payload, dtype=_reply_word(cfg)).astype(np.int64)
    ct = ct.reshape(2, layout.polys_per_cell, cfg.secret_dimension)
    phase = (ct[1] - key.times(ct[0], bits).astype(np.int64)) & ((1 << bits) - 1)
    shift = bits - PLAINTEXT_BITS
    plain = (((phase + (1 << (shift - 1))) >> shift) & 0xFF).astype(np.uint8)
    cell_bytes = plain.tobytes()
    _, slot = layout.locate(index)
    raw = cell_bytes[slot * layout.slot_bytes:(slot + 1) * layout.slot_bytes]
    record, tag = raw[:-CHECKSUM_BYTES], raw[-CHECKSUM_BYTES:]
    if checksum(params.hash, index, record) != tag:
        raise DecryptionFailure(f"checksum mismatch for record {index}")
    return record


# server side ---------------------------------------------------------------

class PreparedDatabase:
    """Database encoded as hypercube cells of int8 ring coefficients.

    Immutable after construction; safe to share between request handlers.
    """

    def __init__(self, params: PirParams, records):
        cfg = params.lattice
        layout = params.layout
        self.params = params
        n = cfg.secret_dimension
        dims = cfg.hypercube_dims
        size = params.record_size_bytes
        g, slot, e = layout.records_per_cell, layout.slot_bytes, layout.polys_per_cell

        total = math.prod(dims)
        buf = np.zeros((total, e * n), dtype=np.uint8)
        phash = params.hash
        slots = np.zeros((layout.num_cells * g, slot), dtype=np.uint8)
        for j, rec in enumerate(records):
            slots[j, :size] = np.frombuffer(rec, dtype=np.uint8)
            slots[j, size:] = np.frombuffer(checksum(phash, j, rec), dtype=np.uint8)
        buf[:layout.num_cells, :g * slot] = slots.reshape(layout.num_cells, g * slot)
        # plaintext bytes read as signed so |coefficient| <= p/2
        self.cells = buf.view(np.int8).reshape(dims[0], total // dims[0] * e, n)
        # evaluation form, laid out (h, m, j) for batched matmul against the query
        self.fft = None
        if self.cells.size * 8 <= FFT_CACHE_LIMIT:
            f = ring.forward(self.cells.astype(np.float64))
            self.fft = np.ascontiguousarray(f.transpose(2, 1, 0))


def answer(prepared: PreparedDatabase, payload: bytes) -> bytes:
    params = prepared.params
    cfg = params.lattice
    n, log_q, dims = cfg.secret_dimension, cfg.log_q, cfg.hypercube_dims
    levels = cfg.gadget_levels
    e = params.layout.polys_per_cell
    if len(payload) != query_payload_size(params):
        raise MalformedQuery(
            f"query payload is {len(payload)} bytes, expected {query_payload_size(params)}")
    rows = dims[0] + 2 * levels * sum(dims[1:])
    seed = payload[:SEED_BYTES]
    a = expand_uniform_u32(seed, (rows, n))
    b = np.frombuffer(payload, dtype="<u4", offset=SEED_BYTES).reshape(rows, n)

    # first dimension: plaintext x ciphertext inner product
    q1 = ring.forward(ring.centered(np.stack([a[:dims[0]], b[:dims[0]]], axis=1), log_q))
    qt = q1.transpose(2, 0, 1)
    if prepared.fft is not None:
        acc = np.matmul(prepared.fft, qt).transpose(2, 1, 0)
    else:
        cells = prepared.cells
        acc = np.empty((2, cells.shape[1], n // 2), dtype=np.complex128)
        step = max(1, STREAM_BLOCK_BYTES // (dims[0] * n * 8))
        for s in range(0, cells.shape[1], step):
            f = ring.forward(cells[:, s:s + step].astype(np.float64))
            acc[:, s:s + step] = np.matmul(f.transpose(2, 1, 0), qt).transpose(2, 1, 0)
    ct = ring.round_mod(ring.inverse(acc), log_q)

    # later dimensions: external products with RGSW indicator rows
    row = dims[0]
    for k in range(1, len(dims)):
        d = dims[k]
        span = 2 * levels * d
        g = ring.forward(ring.centered(np.stack([a[row:row + span], b[row:row + span]], axis=1), log_q))
        g = g.reshape(d, 2 * levels, 2, -1)
        row += span
        ct = ct.reshape(2, d, -1, n)
        digits = ring.gadget_decompose(ct, cfg.gadget_base_bits, levels, log_q)
        # RGSW row r < levels pairs with digit r of the b half, r >= levels with the a half
        digits = np.concatenate([digits[:, 1], digits[:, 0]])  # (2*levels, d, m, n)
        f = ring.forward(digits.astype(np.float64))  # (r, t, m, h)
        m = f.shape[2]
        f = f.transpose(3, 2, 1, 0).reshape(-1, m, d * 2 * levels)  # (h, m, (t, r))
        g = g.transpose(3, 0, 1, 2).reshape(-1, d * 2 * levels, 2)  # (h, (t, r), c)
        acc = np.matmul(f, g).transpose(2, 1, 0)
        ct = ring.round_mod(ring.inverse(acc), log_q)

    ct = ct.reshape(2, e, n)
    bits = cfg.reply_modulus_bits
    if bits < log_q:
        drop = log_q - bits
        ct = ((ct.astype(np.int64) + (1 << (drop - 1))) >> drop) & ((1 << bits) - 1)
    return ct.astype(_reply_word(cfg)).tobytes()
