"""Client SDK: tree sync, private bucket fetch and local ad selection."""
from adpir.client.matching import encode_predicate, matches, parse_context
from adpir.client.sdk import (
    Client,
    ClientState,
    PrefetchConfig,
    Prefetcher,
    load_state,
    pick_from_stash,
    round_robin,
    save_state,
    top_category,
    upload_batch,
)
from adpir.client.transport import LoopbackTransport, TcpTransport, Transcript

__all__ = [
    "Client", "ClientState", "LoopbackTransport", "PrefetchConfig", "Prefetcher", "TcpTransport",
    "Transcript", "encode_predicate", "load_state", "matches", "parse_context", "pick_from_stash",
    "round_robin",
    "save_state", "top_category", "upload_batch",
]
