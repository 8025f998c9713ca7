"""PIR parameter sets, database layout and the lattice noise budget."""
from __future__ import annotations

import dataclasses
import enum
import functools
import hashlib
import json
import math
from typing import Optional

from adpir.errors import ConfigError, UnsatisfiableNoiseBudget

# One plaintext byte per ring coefficient.
PLAINTEXT_BITS = 8
CHECKSUM_BYTES = 4
DEFAULT_FAILURE_BOUND = 2.0**-40
MAX_DIMS = 3


class Backend(enum.IntEnum):
    TRIVIAL = 0
    LATTICE = 1

    @classmethod
    def parse(cls, value) -> "Backend":
        if isinstance(value, Backend):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ConfigError(f"unknown backend {value!r}") from None
        return cls(value)


@dataclasses.dataclass(frozen=True)
class LatticeConfig:
    """RLWE parameters for the lattice backend.

    ``hypercube_dims`` may be left empty, in which case :func:`pir_init`
    picks the shape that minimises query size for the database at hand.
    ``records_per_cell = 0`` likewise means "pack as many records as fit
    in one ring element".
    """

    modulus: int = 2**32
    secret_dimension: int = 1024
    noise_stddev: float = 3.2
    hypercube_dims: tuple[int, ...] = ()
    gadget_base_bits: int = 11
    gadget_levels: int = 2
    reply_modulus_bits: int = 16
    records_per_cell: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hypercube_dims", tuple(int(d) for d in self.hypercube_dims))
        q = self.modulus
        if q < 2**16 or q > 2**32 or q & (q - 1):
            raise ConfigError("modulus must be a power of two in [2^16, 2^32]")
        n = self.secret_dimension
        if n < 2 or n & (n - 1):
            raise ConfigError("secret_dimension must be a power of two")
        if self.noise_stddev <= 0:
            raise ConfigError("noise_stddev must be positive")
        if any(d < 1 for d in self.hypercube_dims) or len(self.hypercube_dims) > MAX_DIMS:
            raise ConfigError(f"hypercube_dims must hold 1..{MAX_DIMS} positive sizes")
        if self.gadget_base_bits < 1 or self.gadget_levels < 1:
            raise ConfigError("gadget base and levels must be positive")
        if self.gadget_base_bits * self.gadget_levels > self.log_q:
            raise ConfigError("gadget covers more bits than the modulus")
        if not PLAINTEXT_BITS + 2 <= self.reply_modulus_bits <= self.log_q:
            raise ConfigError("reply_modulus_bits out of range")
        if self.records_per_cell < 0:
            raise ConfigError("records_per_cell must be >= 0")

    @property
    def log_q(self) -> int:
        return self.modulus.bit_length() - 1

    @property
    def eta(self) -> int:
        """Centered-binomial parameter: 2*sigma^2 rounded up to a whole number of bytes."""
        return 8 * math.ceil(2 * self.noise_stddev**2 / 8)

    @property
    def noise_variance(self) -> float:
        return self.eta / 2

    @property
    def gadget_skip_bits(self) -> int:
        """Low-order ciphertext bits rounded away before gadget decomposition."""
        return self.log_q - self.gadget_base_bits * self.gadget_levels

    @property
    def bytes_per_poly(self) -> int:
        return self.secret_dimension * PLAINTEXT_BITS // 8


@dataclasses.dataclass(frozen=True)
class CellLayout:
    """How records are packed into hypercube cells of whole ring elements."""

    slot_bytes: int
    records_per_cell: int
    polys_per_cell: int
    num_cells: int

    def locate(self, index: int) -> tuple[int, int]:
        return divmod(index, self.records_per_cell)


def cell_layout(record_size: int, num_records: int, cfg: LatticeConfig) -> CellLayout:
    slot = record_size + CHECKSUM_BYTES
    per_poly = cfg.bytes_per_poly
    g = cfg.records_per_cell or max(1, per_poly // slot)
    g = min(g, num_records)
    polys = math.ceil(g * slot / per_poly)
    return CellLayout(slot, g, polys, math.ceil(num_records / g))


@dataclasses.dataclass(frozen=True)
class PirParams:
    """Public parameters shared by client and server.

    ``client_storage`` is the client's record budget ``c`` passed to
    :func:`pir_init`; stateless backends record it but never use it.
    ``db_version`` ties the parameters to one database snapshot so that
    queries built against an older snapshot are rejected.
    """

    backend: Backend
    record_size_bytes: int
    num_records: int
    lattice: Optional[LatticeConfig] = None
    failure_bound: float = DEFAULT_FAILURE_BOUND
    client_storage: int = 0
    db_version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend.parse(self.backend))
        if self.record_size_bytes <= 0 or self.num_records <= 0:
            raise ConfigError("record_size_bytes and num_records must be positive")
        if self.backend is Backend.LATTICE:
            if self.lattice is None or not self.lattice.hypercube_dims:
                raise ConfigError("lattice backend needs a concrete LatticeConfig")
            if math.prod(self.lattice.hypercube_dims) < self.layout.num_cells:
                raise ConfigError("hypercube too small for the database")

    @functools.cached_property
    def layout(self) -> CellLayout:
        return cell_layout(self.record_size_bytes, self.num_records, self.lattice)

    def to_dict(self) -> dict:
        d = {
            "backend": self.backend.name.lower(),
            "record_size_bytes": self.record_size_bytes,
            "num_records": self.num_records,
            "failure_bound": self.failure_bound,
            "client_storage": self.client_storage,
            "db_version": self.db_version,
            "lattice": None,
        }
        if self.lattice is not None:
            d["lattice"] = dataclasses.asdict(self.lattice)
            d["lattice"]["hypercube_dims"] = list(self.lattice.hypercube_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PirParams":
        lat = d.get("lattice")
        return cls(
            backend=Backend.parse(d["backend"]),
            record_size_bytes=d["record_size_bytes"],
            num_records=d["num_records"],
            lattice=LatticeConfig(**lat) if lat else None,
            failure_bound=d["failure_bound"],
            client_storage=d.get("client_storage", 0),
            db_version=d.get("db_version", 0),
        )

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PirParams":
        return cls.from_dict(json.loads(data))

    @functools.cached_property
    def hash(self) -> bytes:
        """8-byte digest binding queries and replies to this database layout."""
        return hashlib.blake2b(self.to_bytes(), digest_size=8).digest()


# noise budget -------------------------------------------------------------

def noise_variances(cfg: LatticeConfig, dims: tuple[int, ...]) -> dict[str, float]:
    """Per-stage noise variance of the reply, in units of the reply modulus.

    Plaintext bytes are bounded by p/2 in absolute value (worst case over
    database contents); gadget digits of pseudo-random ciphertexts are
    uniform on [-B/2, B/2); the secret is uniform ternary.
    """
    n = cfg.secret_dimension
    sigma2 = cfg.noise_variance
    p = 1 << PLAINTEXT_BITS
    base = 1 << cfg.gadget_base_bits
    digit_var = (base * base + 2) / 12
    fold_first = dims[0] * n * (p / 2) ** 2 * sigma2
    fold_rest = sum(d * 2 * cfg.gadget_levels * n * digit_var * sigma2 for d in dims[1:])
    # rounding remainder r of approximate decomposition enters as u*(r_b - r_a*s)
    skip = 1 << cfg.gadget_skip_bits
    rounding = (len(dims) - 1) * (skip * skip - 1) / 12 * (1 + n * 2 / 3) if skip > 1 else 0.0
    # float64 FFT rounding: well under one unit per product, budget one per stage
    fft = float(len(dims))
    scale = 2.0 ** (cfg.reply_modulus_bits - cfg.log_q)
    switch = 0.0
    if cfg.reply_modulus_bits < cfg.log_q:
        switch = (1 + n * 2 / 3) / 12
    return {
        "first_fold": fold_first * scale**2,
        "later_folds": fold_rest * scale**2,
        "gadget_rounding": rounding * scale**2,
        "fft": fft * scale**2,
        "modulus_switch": switch,
    }


def failure_log2(cfg: LatticeConfig, dims: tuple[int, ...], polys_per_cell: int) -> float:
    """log2 of a union bound on the probability that any reply coefficient decodes wrongly.

    Uses the sub-Gaussian tail ``P(|x| >= t) <= 2 exp(-t^2 / (2 var))`` per
    coefficient and a union bound over the ``polys_per_cell * N`` of them.
    """
    var = sum(noise_variances(cfg, dims).values())
    threshold = 2.0 ** (cfg.reply_modulus_bits - PLAINTEXT_BITS - 1)
    coeffs = polys_per_cell * cfg.secret_dimension
    return math.log2(2 * coeffs) - threshold**2 / (2 * var) * math.log2(math.e)


def query_rows(cfg: LatticeConfig, dims: tuple[int, ...]) -> int:
    """RLWE ciphertexts in one query: one per first-dimension slot, 2*levels per later slot."""
    return dims[0] + 2 * cfg.gadget_levels * sum(dims[1:])


def choose_dims(num_cells: int, cfg: LatticeConfig, polys_per_cell: int,
                failure_bound: float) -> tuple[int, ...]:
    """Smallest-query hypercube of at most three dimensions covering ``num_cells``."""
    limit = math.log2(failure_bound)
    best = None
    candidates = [(num_cells,)]
    for d1 in range(1, num_cells + 1):
        rest = math.ceil(num_cells / d1)
        if rest == 1:
            break
        candidates.append((d1, rest))
        for d2 in range(2, math.isqrt(rest) + 2):
            d3 = math.ceil(rest / d2)
            if d3 >= 2:
                candidates.append((d1, d2, d3))
    for dims in candidates:
        key = (query_rows(cfg, dims), math.prod(dims), len(dims))
        if best is not None and key >= best[0]:
            continue
        if failure_log2(cfg, dims, polys_per_cell) <= limit:
            best = (key, dims)
    if best is None:
        raise UnsatisfiableNoiseBudget(
            f"no hypercube for {num_cells} cells meets failure bound 2^{limit:.1f}")
    return best[1]


def make_lattice_config(record_size: int, num_records: int,
                        base: LatticeConfig | None = None,
                        failure_bound: float = DEFAULT_FAILURE_BOUND) -> LatticeConfig:
    """Fill in hypercube dims (if unset) and check the noise budget."""
    if not 0 < failure_bound < 1:
        raise ConfigError("failure_bound must lie strictly between 0 and 1")
    base = base or LatticeConfig()
    layout = cell_layout(record_size, num_records, base)
    dims = base.hypercube_dims
    if not dims:
        dims = choose_dims(layout.num_cells, base, layout.polys_per_cell, failure_bound)
    elif math.prod(dims) < layout.num_cells:
        raise ConfigError(f"hypercube {dims} holds {math.prod(dims)} cells, need {layout.num_cells}")
    cfg = dataclasses.replace(base, hypercube_dims=dims, records_per_cell=layout.records_per_cell)
    if failure_log2(cfg, dims, layout.polys_per_cell) > math.log2(failure_bound):
        raise UnsatisfiableNoiseBudget(
            f"dims {dims}: failure bound 2^{failure_log2(cfg, dims, layout.polys_per_cell):.1f}"
            f" exceeds 2^{math.log2(failure_bound):.1f}")
    return cfg
