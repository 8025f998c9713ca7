"""The untrusted proxy: catalog host, tree sync, PIR answers, advertiser uploads."""
from adpir.proxy.server import BackgroundServer, ProxyServer, parse_address, serve_forever
from adpir.proxy.service import ProxyService, Snapshot, build_snapshot
from adpir.proxy.wire import EntryStatus, ErrorCode, MsgType

__all__ = [
    "BackgroundServer", "EntryStatus", "ErrorCode", "MsgType", "ProxyServer", "ProxyService",
    "Snapshot", "build_snapshot", "parse_address", "serve_forever",
]
