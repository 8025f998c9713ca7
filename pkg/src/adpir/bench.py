"""Synthetic catalogs, end-to-end fetch benchmarks, and table emission."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import statistics
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from adpir import cost
from adpir.catalog import AdCatalog, CatalogConfig, UpdateEntry, UpdateOp, save_catalog, update_ads
from adpir.client import Client, TcpTransport, Transcript
from adpir.errors import ConfigError
from adpir.lsh import build_profile
from adpir.pir import Backend, LatticeConfig, PirReply, pir_query
from adpir.proxy import BackgroundServer, ProxyService, wire
from adpir.rng import Csprng


@dataclasses.dataclass(frozen=True)
class BenchConfig:
    n_categories: int
    k: int = 30
    payload_bytes: int = 1024
    backend: str = "lattice"
    trials: int = 3
    seed: int = 0
    depth: Optional[int] = None
    fill: Optional[int] = None  # live ads per bucket, default k
    hypercube: tuple[int, ...] = ()  # fixed lattice shape; empty picks one per catalog

    def __post_init__(self):
        if self.n_categories < 1:
            raise ConfigError("n_categories must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.k < 1 or self.payload_bytes < 1:
            raise ConfigError("k and payload_bytes must be positive")
        if self.n_categories > 1 << self.tree_depth:
            raise ConfigError(f"{self.n_categories} categories do not fit depth {self.tree_depth}")
        if not 1 <= self.ads_per_bucket <= self.k:
            raise ConfigError("fill must be in [1, k]")
        Backend.parse(self.backend)

    @property
    def tree_depth(self) -> int:
        if self.depth is not None:
            return self.depth
        return max(1, math.ceil(math.log2(self.n_categories)))

    def lattice_config(self) -> LatticeConfig | None:
        return LatticeConfig(hypercube_dims=tuple(self.hypercube)) if self.hypercube else None

    @property
    def ads_per_bucket(self) -> int:
        return self.k if self.fill is None else self.fill

    def seed_bytes(self, label: bytes) -> bytes:
        return hashlib.sha256(label + self.seed.to_bytes(8, "little", signed=True)).digest()


def gen_catalog(cfg: BenchConfig, directory: str | Path | None = None) -> AdCatalog:
    """Deterministic synthetic catalog; also written to ``directory`` if given."""
    ccfg = CatalogConfig(depth=cfg.tree_depth, k=cfg.k, ad_payload_bytes=cfg.payload_bytes,
                         hyperplane_seed=cfg.seed_bytes(b"hyperplanes"))
    pick = np.random.Generator(np.random.PCG64(cfg.seed))
    leaves = np.sort(pick.choice(1 << cfg.tree_depth, cfg.n_categories, replace=False))
    rng = Csprng(cfg.seed_bytes(b"ads"))
    per = cfg.ads_per_bucket
    ids = rng.bytes(16 * cfg.n_categories * per)
    blob = rng.bytes(cfg.payload_bytes * cfg.n_categories * per)
    batch = []
    for c, leaf in enumerate(leaves):
        category = format(int(leaf), f"0{cfg.tree_depth}b")
        for a in range(per):
            i = c * per + a
            batch.append(UpdateEntry(UpdateOp.ADD, ids[16 * i:16 * (i + 1)], category, b"",
                                     blob[cfg.payload_bytes * i:cfg.payload_bytes * (i + 1)]))
    cat = update_ads(AdCatalog.empty(ccfg), batch)
    cat = dataclasses.replace(cat, timestamp=0.0)
    if directory is not None:
        save_catalog(cat, directory)
    return cat


# benchmarking ---------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class BenchReport:
    backend: str
    n_categories: int
    record_bytes: int
    trials: int
    query_bytes: int  # whole frames on the wire
    reply_bytes: int
    reply_payload_bytes: int  # PIR reply payload alone
    fetch_secs: tuple[float, ...]
    reply_secs: tuple[float, ...]
    setup_secs: float
    hypercube: tuple[int, ...] = ()
    ads_fetched: int = 0

    @property
    def mean_fetch(self) -> float:
        return statistics.fmean(self.fetch_secs)

    @property
    def mean_reply(self) -> float:
        return statistics.fmean(self.reply_secs)

    def percentile(self, p: float) -> float:
        return float(np.percentile(self.fetch_secs, p))


def _profile(cfg: BenchConfig, trial: int):
    rng = np.random.Generator(np.random.PCG64([cfg.seed, trial]))
    return build_profile((f"feature-{int(f)}", float(w))
                         for f, w in zip(rng.integers(0, 10_000, 16), rng.exponential(1.0, 16)))


def bench_query(cfg: BenchConfig, service: ProxyService | None = None) -> BenchReport:
    """Time ``cfg.trials`` private fetches through a loopback TCP proxy.

    ``fetch_secs`` covers query generation, the network round trip and
    decoding; ``reply_secs`` times the server-side PIR answer alone against
    the same snapshot.
    """
    start = time.perf_counter()
    if service is None:
        service = ProxyService(gen_catalog(cfg), cfg.backend, lattice_config=cfg.lattice_config())
    setup = time.perf_counter() - start
    snap = service.snapshot
    fetch, reply, ads = [], [], 0
    up = down = payload = 0
    with BackgroundServer(service) as server:
        transcript = Transcript()
        with TcpTransport(server.address, transcript) as transport:
            for trial in range(cfg.trials):
                client = Client(transport, _profile(cfg, trial), seed=cfg.seed_bytes(b"client%d" % trial))
                client.sync_tree()
                transcript.clear()
                t0 = time.perf_counter()
                client.fetch_bucket()
                fetch.append(time.perf_counter() - t0)
                ads += len(client.state.stash)
                up, down = len(transcript.outbound[-1]), len(transcript.inbound[-1])
                payload = len(PirReply.from_bytes(wire.decode_frame(transcript.inbound[-1])[1]).payload)

                # server-side answer time, same snapshot, no network
                st = client.state.pir_state
                q = pir_query(0, st)
                t0 = time.perf_counter()
                service.handle_pir_query(q)
                reply.append(time.perf_counter() - t0)
                st.pending_index = None
    params = snap.params
    dims = params.lattice.hypercube_dims if params.lattice else ()
    return BenchReport(params.backend.name.lower(), len(snap.catalog), params.record_size_bytes,
                       cfg.trials, up, down, payload, tuple(fetch), tuple(reply), setup, tuple(dims), ads)


# tables -------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class Table:
    name: str
    mode: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def to_text(self) -> str:
        widths = [max(len(c), *(len(r[i]) for r in self.rows)) if self.rows else len(c)
                  for i, c in enumerate(self.columns)]
        line = "  ".join
        out = [f"{self.name} [{self.mode}]",
               line(c.rjust(w) for c, w in zip(self.columns, widths)),
               line("-" * w for w in widths)]
        out += [line(v.rjust(w) for v, w in zip(r, widths)) for r in self.rows]
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["#table", self.name, self.mode])
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()


def parse_csv(text: str) -> list[Table]:
    """Inverse of concatenated :meth:`Table.to_csv` outputs."""
    tables, current = [], None
    for row in csv.reader(io.StringIO(text)):
        if not row:
            continue
        if row[0] == "#table":
            current = [row[1], row[2], None, []]
            tables.append(current)
        elif current[2] is None:
            current[2] = tuple(row)
        else:
            current[3].append(tuple(row))
    return [Table(n, m, c, tuple(r)) for n, m, c, r in tables]


def _kb(n: float) -> str:
    return f"{n / cost.KIB:.1f}"


def _cents(x: float) -> str:
    return f"{x:.2f}"


def reference_tables() -> list[Table]:
    ns = sorted(cost.REFERENCE_SECS_PER_QUERY)
    comm = cost.REFERENCE_COMM
    size = Table("query-size", "paper", ("n", "up_kb", "down_kb", "total_kb"),
                 tuple((str(n), _kb(comm.up), _kb(comm.down), _kb(comm.total)) for n in ns))
    compute = Table("compute-server", "paper", ("n", "secs_per_query"),
                    tuple((str(n), f"{cost.REFERENCE_SECS_PER_QUERY[n]:g}") for n in ns))
    reports = cost.reference_reports()
    client = Table("client-cost", "paper", ("n", "compute_cents", "bandwidth_cents", "total_cents"),
                   tuple((str(r.n_ads), _cents(r.compute_cents_per_month),
                          _cents(r.bandwidth_cents_per_month), _cents(r.total_cents_per_month))
                         for r in reports))
    return [size, compute, client]


def measured_tables(reports: Sequence[BenchReport]) -> list[Table]:
    size = Table("query-size", "measured", ("n", "record_kb", "up_kb", "down_kb", "total_kb"),
                 tuple((str(r.n_categories), _kb(r.record_bytes), _kb(r.query_bytes),
                        _kb(r.reply_bytes), _kb(r.query_bytes + r.reply_bytes)) for r in reports))
    compute = Table("compute-server", "measured",
                    ("n", "secs_per_reply", "secs_per_fetch", "p95_fetch"),
                    tuple((str(r.n_categories), f"{r.mean_reply:.4f}", f"{r.mean_fetch:.4f}",
                           f"{r.percentile(95):.4f}") for r in reports))
    rows = []
    for r in reports:
        c = cost.privatefetch_cost(cost.CostInputs(r.n_categories, r.mean_reply,
                                                   r.query_bytes + r.reply_bytes), "measured")
        rows.append((str(r.n_categories), f"{c.compute_cents_per_month:.4f}",
                     f"{c.bandwidth_cents_per_month:.4f}", f"{c.total_cents_per_month:.4f}"))
    client = Table("client-cost", "measured",
                   ("n", "compute_cents", "bandwidth_cents", "total_cents"), tuple(rows))
    return [size, compute, client]


def emit_tables(reports: Sequence[BenchReport] | None = None, mode: str = "paper",
                fmt: str = "text") -> str:
    if mode == "paper":
        tables = reference_tables()
    elif mode == "measured":
        tables = measured_tables(reports or ())
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    if fmt == "csv":
        return "".join(t.to_csv() for t in tables)
    if fmt != "text":
        raise ConfigError(f"unknown format {fmt!r}")
    return "\n".join(t.to_text() for t in tables)
