"""Threaded TCP front end: one persistent connection per client, frames in order."""
from __future__ import annotations

import logging
import socketserver
import threading

from adpir.proxy import wire
from adpir.proxy.service import ProxyService
from adpir.proxy.wire import ErrorCode, MsgType

log = logging.getLogger("adpir.proxy")


class _Handler(socketserver.StreamRequestHandler):
    server: "ProxyServer"

    def handle(self):
        service = self.server.service
        while True:
            try:
                frame = wire.read_frame(self.rfile, service.max_body)
            except wire.BodyTooLarge as exc:
                # the stream cannot be resynchronised past an unread body
                self._send(MsgType.ERROR, wire.encode_error(ErrorCode.MALFORMED_QUERY, str(exc)))
                return
            except (wire.ProtocolError, EOFError, ConnectionError) as exc:
                log.info("connection dropped: %s", type(exc).__name__)
                return
            if frame is None:
                return
            if not self._send(*service.handle_frame(*frame)):
                return

    def _send(self, kind: MsgType, body: bytes) -> bool:
        try:
            self.wfile.write(wire.encode_frame(kind, body))
            self.wfile.flush()
            return True
        except (ConnectionError, OSError):
            return False


class ProxyServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], service: ProxyService):
        self.service = service
        super().__init__(address, _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address {text!r} is not HOST:PORT")
    return host.strip("[]"), int(port)


class BackgroundServer:
    """Context manager running a :class:`ProxyServer` on a daemon thread."""

    def __init__(self, service: ProxyService, host: str = "127.0.0.1", port: int = 0):
        self.server = ProxyServer((host, port), service)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    def __enter__(self) -> "BackgroundServer":
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self._thread.join()


def serve_forever(service: ProxyService, address: tuple[str, int]) -> None:
    with ProxyServer(address, service) as server:
        log.info("listening on %s:%d", *server.address)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


__all__ = ["BackgroundServer", "ProxyServer", "parse_address", "serve_forever"]
