"""Proxy-side ad catalog and the category index tree."""
from adpir.catalog.ads import (
    AD_ID_BYTES,
    AdCatalog,
    AdRecord,
    CatalogConfig,
    DuplicateAd,
    EntryResult,
    UpdateEntry,
    UpdateOp,
    apply_updates,
    build_pir_database,
    deserialize_bucket,
    serialize_bucket,
    update_ads,
)
from adpir.catalog.store import append_journal, load_catalog, save_catalog
from adpir.catalog.tree import (
    IndexTree,
    Node,
    SyncKind,
    TreeHeader,
    TreeSync,
    apply_sync,
    full_sync,
    get_index,
    search,
    tree_delta,
    tree_size_bits,
)

__all__ = [
    "AD_ID_BYTES", "AdCatalog", "AdRecord", "CatalogConfig", "DuplicateAd", "EntryResult",
    "IndexTree", "Node", "SyncKind", "TreeHeader", "TreeSync", "UpdateEntry", "UpdateOp",
    "append_journal", "apply_sync", "apply_updates", "build_pir_database",
    "deserialize_bucket", "full_sync", "get_index", "load_catalog", "save_catalog", "search",
    "serialize_bucket", "tree_delta", "tree_size_bits", "update_ads",
]
