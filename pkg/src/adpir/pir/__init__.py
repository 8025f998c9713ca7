"""Single-server PIR with a trivial and a lattice backend."""
from adpir.pir.api import (
    PirClientState,
    PirDatabase,
    PirQuery,
    PirReply,
    client_state,
    failure_probability_log2,
    pir_extract,
    pir_init,
    pir_query,
    pir_reply,
    query_size,
    reply_expansion,
    reply_size,
)
from adpir.pir.params import Backend, LatticeConfig, PirParams

__all__ = [
    "Backend",
    "LatticeConfig",
    "PirClientState",
    "PirDatabase",
    "PirParams",
    "PirQuery",
    "PirReply",
    "client_state",
    "failure_probability_log2",
    "pir_extract",
    "pir_init",
    "pir_query",
    "pir_reply",
    "query_size",
    "reply_expansion",
    "reply_size",
]
