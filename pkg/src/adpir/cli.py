"""``adpir`` command line: catalog generation, proxy, client, benchmarks, cost tables.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from adpir import bench, cost
from adpir.catalog import AdCatalog, CatalogConfig, load_catalog, save_catalog
from adpir.catalog.store import MANIFEST
from adpir.client import Client, TcpTransport, load_state, parse_context, save_state
from adpir.client.sdk import STATE_FILE, pick_from_stash
from adpir.errors import AdpirError, ConfigError, EmptyStash
from adpir.lsh import DEFAULT_DIM, PreferenceProfile, build_profile
from adpir.proxy import ProxyService, parse_address, serve_forever

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def read_profile(path: str | Path, dim: int = DEFAULT_DIM) -> PreferenceProfile:
    """Profile file: one ``feature,weight`` per line; blank lines and ``#`` comments skipped."""
    events = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        feature, sep, weight = line.rpartition(",")
        if not sep or not feature:
            raise ConfigError(f"{path}:{lineno}: expected feature,weight")
        try:
            events.append((feature.strip(), float(weight)))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: weight {weight!r} is not a number") from None
    return build_profile(events, dim)


# subcommands ------------------------------------------------------------------------

def cmd_gen_catalog(args) -> int:
    cfg = bench.BenchConfig(args.n, k=args.k, payload_bytes=args.payload_bytes, seed=args.seed,
                            depth=args.depth, fill=args.fill)
    cat = bench.gen_catalog(cfg, args.out)
    print(f"wrote {len(cat)} buckets x {cfg.k} ads to {args.out} "
          f"(depth {cfg.tree_depth}, {len(cat) * cat.config.bucket_bytes} bytes)")
    return EXIT_OK


def _open_catalog(args) -> AdCatalog:
    root = Path(args.catalog_dir)
    if (root / MANIFEST).exists():
        cat = load_catalog(root)
        c = cat.config
        for flag, have in (("k", c.k), ("payload_bytes", c.ad_payload_bytes), ("depth", c.depth)):
            want = getattr(args, flag)
            if want is not None and want != have:
                raise ConfigError(f"--{flag.replace('_', '-')} {want} conflicts with catalog value {have}")
        return cat
    cfg = CatalogConfig.with_random_seed(k=args.k or 30, ad_payload_bytes=args.payload_bytes or 1024,
                                         depth=args.depth or 8)
    cat = AdCatalog.empty(cfg)
    save_catalog(cat, root)
    return cat


def cmd_serve(args) -> int:
    address = parse_address(args.listen)
    cat = _open_catalog(args)
    tokens = [t.encode() for t in args.token]
    service = ProxyService(cat, args.backend, tokens=tokens, catalog_dir=args.catalog_dir)
    print(f"serving catalog v{cat.version} ({len(cat)} buckets, {args.backend}) on {args.listen}",
          flush=True)
    serve_forever(service, address)
    return EXIT_OK


def cmd_client_fetch(args) -> int:
    out = Path(args.out)
    with TcpTransport(parse_address(args.proxy)) as transport:
        client = Client(transport, PreferenceProfile({}))
        if (out / STATE_FILE).exists():
            client.state = load_state(out)
        client.sync_tree()
        client.state.profile = read_profile(args.profile, client.state.tree.header.feature_dim)
        before = len(client.state.stash)
        for _ in range(args.count):
            client.fetch_bucket()
    save_state(client.state, out)
    print(f"fetched {len(client.state.stash) - before} ads; stash holds {len(client.state.stash)}")
    return EXIT_OK


def cmd_client_pick(args) -> int:
    state = load_state(args.state)
    if not state.stash:
        raise EmptyStash("stash is empty; run 'client fetch' first")
    ad = pick_from_stash(state.stash, parse_context(args.context))
    save_state(state, args.state)
    print(f"ad {ad.ad_id.hex()} category {ad.category} ({len(state.stash)} left)")
    if args.payload_out:
        Path(args.payload_out).write_bytes(ad.payload)
    return EXIT_OK


def cmd_bench(args) -> int:
    reports = []
    for n in args.n:
        cfg = bench.BenchConfig(n, k=args.k, payload_bytes=args.payload_bytes, backend=args.backend,
                                trials=args.trials, seed=args.seed,
                                hypercube=tuple(args.hypercube or ()))
        reports.append(bench.bench_query(cfg))
    text = bench.emit_tables(reports, "measured", args.format)
    print(text, end="")
    if args.csv:
        Path(args.csv).write_text(bench.emit_tables(reports, "measured", "csv"))
    return EXIT_OK


def cmd_cost(args) -> int:
    if args.mode == "paper":
        print(bench.emit_tables(mode="paper", fmt=args.format), end="")
        trivial = cost.trivial_cost()
        ratio = cost.savings_ratio(cost.reference_reports()[0], trivial)
        if args.format == "text":
            print(f"\ntrivial baseline: {trivial:.2f} cents/month "
                  f"({cost.TRIVIAL_DOWNLOADS_PER_MONTH:.3f} calibrated downloads/month)")
            print(f"private/trivial compute ratio at n=262144: {ratio:.3f}")
        return EXIT_OK
    if args.n is None or args.secs_per_query is None:
        raise ConfigError("measured mode needs --n and --secs-per-query")
    inputs = cost.CostInputs(args.n, args.secs_per_query, args.comm_bytes, args.queries_per_day,
                             args.days_per_month, args.core_hour_cents, args.gb_cents)
    r = cost.privatefetch_cost(inputs, "measured")
    table = bench.Table("client-cost", "measured",
                        ("n", "compute_cents", "bandwidth_cents", "total_cents"),
                        ((str(r.n_ads), f"{r.compute_cents_per_month:.4f}",
                          f"{r.bandwidth_cents_per_month:.4f}", f"{r.total_cents_per_month:.4f}"),))
    print(table.to_csv() if args.format == "csv" else table.to_text(), end="")
    return EXIT_OK


# parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adpir", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-catalog", help="write a deterministic synthetic catalog")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True, help="number of categories")
    g.add_argument("--k", type=int, default=30)
    g.add_argument("--payload-bytes", type=int, default=1024)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--depth", type=int)
    g.add_argument("--fill", type=int, help="live ads per bucket (default k)")
    g.set_defaults(func=cmd_gen_catalog)

    s = sub.add_parser("serve", help="run the proxy")
    s.add_argument("--catalog-dir", required=True)
    s.add_argument("--listen", default="127.0.0.1:7070")
    s.add_argument("--backend", choices=("trivial", "lattice"), default="lattice")
    s.add_argument("--k", type=int)
    s.add_argument("--payload-bytes", type=int)
    s.add_argument("--depth", type=int)
    s.add_argument("--token", action="append", default=[], help="allowed advertiser token")
    s.set_defaults(func=cmd_serve)

    c = sub.add_parser("client", help="client operations")
    csub = c.add_subparsers(dest="client_command", required=True, parser_class=_Parser)
    f = csub.add_parser("fetch", help="sync the tree and privately fetch a bucket")
    f.add_argument("--proxy", required=True)
    f.add_argument("--profile", required=True)
    f.add_argument("--out", default="adpir-client")
    f.add_argument("--count", type=int, default=1)
    f.set_defaults(func=cmd_client_fetch)
    k = csub.add_parser("pick", help="take one ad from the local stash")
    k.add_argument("--context", default="")
    k.add_argument("--state", default="adpir-client")
    k.add_argument("--payload-out")
    k.set_defaults(func=cmd_client_pick)

    b = sub.add_parser("bench", help="end-to-end fetch benchmark over loopback")
    b.add_argument("--n", type=int, nargs="+", default=[256])
    b.add_argument("--k", type=int, default=30)
    b.add_argument("--payload-bytes", type=int, default=1024)
    b.add_argument("--backend", choices=("trivial", "lattice"), default="lattice")
    b.add_argument("--trials", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--hypercube", type=int, nargs="+", help="fixed lattice hypercube dims")
    b.add_argument("--format", choices=("text", "csv"), default="text")
    b.add_argument("--csv", help="also write CSV here")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("cost", help="monthly per-user cost tables")
    o.add_argument("--mode", choices=("paper", "measured"), default="paper")
    o.add_argument("--n", type=int)
    o.add_argument("--secs-per-query", type=float)
    o.add_argument("--comm-bytes", type=int, default=cost.REFERENCE_COMM.total)
    o.add_argument("--queries-per-day", type=int, default=cost.DEFAULT_QUERIES_PER_DAY)
    o.add_argument("--days-per-month", type=int, default=cost.DEFAULT_DAYS_PER_MONTH)
    o.add_argument("--core-hour-cents", type=float, default=cost.DEFAULT_CORE_HOUR_CENTS)
    o.add_argument("--gb-cents", type=float, default=cost.DEFAULT_GB_CENTS)
    o.add_argument("--format", choices=("text", "csv"), default="text")
    o.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"adpir: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AdpirError, OSError, EOFError) as exc:
        print(f"adpir: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"adpir: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
