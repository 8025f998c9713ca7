"""On-disk catalog: ``manifest.json``, one file per bucket, an update journal."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

from adpir.catalog.ads import (
    AdCatalog,
    CatalogConfig,
    EntryResult,
    UpdateEntry,
    deserialize_bucket,
)
from adpir.catalog.tree import IndexTree

MANIFEST = "manifest.json"
JOURNAL = "journal.jsonl"
BUCKET_DIR = "buckets"


def _config_dict(cfg: CatalogConfig) -> dict:
    return {
        "depth": cfg.depth,
        "k": cfg.k,
        "ad_payload_bytes": cfg.ad_payload_bytes,
        "feature_dim": cfg.feature_dim,
        "hyperplane_seed": cfg.hyperplane_seed.hex(),
        "eviction": cfg.eviction,
    }


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_catalog(cat: AdCatalog, directory) -> Path:
    root = Path(directory)
    (root / BUCKET_DIR).mkdir(parents=True, exist_ok=True)
    for i in range(len(cat)):
        _atomic_write(root / BUCKET_DIR / f"{i:06d}.bin", cat.serialized_bucket(i))
    for stale in (root / BUCKET_DIR).glob("*.bin"):
        if int(stale.stem) >= len(cat):
            stale.unlink()
    manifest = {
        "version": cat.version,
        "timestamp": cat.timestamp,
        "config": _config_dict(cat.config),
        "order": list(cat.order),
        "labels": dict(cat.tree.labels),
    }
    _atomic_write(root / MANIFEST, json.dumps(manifest, indent=1).encode())
    return root


def load_catalog(directory) -> AdCatalog:
    root = Path(directory)
    manifest = json.loads((root / MANIFEST).read_text())
    c = manifest["config"]
    cfg = CatalogConfig(
        depth=c["depth"],
        k=c["k"],
        ad_payload_bytes=c["ad_payload_bytes"],
        feature_dim=c["feature_dim"],
        hyperplane_seed=bytes.fromhex(c["hyperplane_seed"]),
        eviction=c["eviction"],
    )
    order = tuple(manifest["order"])
    buckets = {}
    for i, category in enumerate(order):
        data = (root / BUCKET_DIR / f"{i:06d}.bin").read_bytes()
        buckets[category] = tuple(deserialize_bucket(data, cfg))
    cat = AdCatalog(cfg, order, buckets, manifest["version"], manifest["timestamp"])
    tree = IndexTree(cat.header(), cat.tree.leaves, manifest.get("labels", {}),
                     history_base=cat.version)
    return AdCatalog(cfg, order, buckets, cat.version, cat.timestamp, tree)


def append_journal(directory, version: int, batch: Iterable[UpdateEntry],
                   results: Iterable[EntryResult]) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / JOURNAL, "a") as fh:
        for entry, res in zip(batch, results):
            fh.write(json.dumps({
                "version": version,
                "op": entry.op.name.lower(),
                "ad_id": entry.ad_id.hex(),
                "category": entry.category,
                "matching_logic": entry.matching_logic.hex(),
                "data": entry.data.hex(),
                "ok": res.ok,
                "error": res.error,
            }) + "\n")
