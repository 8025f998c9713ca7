"""Request/response transports with an outbound transcript recorder."""
from __future__ import annotations

import socket
import threading
from typing import Optional

from adpir.errors import ProtocolError
from adpir.proxy import wire
from adpir.proxy.wire import MsgType


class Transcript:
    """Every frame a client writes and reads, as raw bytes."""

    def __init__(self):
        self.outbound: list[bytes] = []
        self.inbound: list[bytes] = []

    def outbound_bytes(self) -> bytes:
        return b"".join(self.outbound)

    def clear(self):
        self.outbound.clear()
        self.inbound.clear()


class Transport:
    def __init__(self, transcript: Optional[Transcript] = None):
        self.transcript = transcript

    def request(self, kind: MsgType, body: bytes) -> tuple[MsgType, bytes]:
        frame = wire.encode_frame(kind, body)
        if self.transcript is not None:
            self.transcript.outbound.append(frame)
        reply = self._exchange(frame)
        if self.transcript is not None:
            self.transcript.inbound.append(reply)
        return wire.decode_frame(reply)

    def _exchange(self, frame: bytes) -> bytes:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LoopbackTransport(Transport):
    """In-process transport straight into a :class:`ProxyService`."""

    def __init__(self, service, transcript: Optional[Transcript] = None):
        super().__init__(transcript)
        self.service = service

    def _exchange(self, frame: bytes) -> bytes:
        return self.service.handle_bytes(frame)


class TcpTransport(Transport):
    """One persistent connection; requests are strictly sequential."""

    def __init__(self, address: tuple[str, int], transcript: Optional[Transcript] = None,
                 timeout: float | None = 300.0):
        super().__init__(transcript)
        self.address = address
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._file = None
        self._lock = threading.Lock()

    def _connect(self):
        self._sock = socket.create_connection(self.address, timeout=self.timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._file = self._sock.makefile("rb")

    def _exchange(self, frame: bytes) -> bytes:
        with self._lock:
            if self._sock is None:
                self._connect()
            self._sock.sendall(frame)
            got = wire.read_frame(self._file)
            if got is None:
                self.close()
                raise ProtocolError("proxy closed the connection")
            return wire.encode_frame(*got)

    def close(self):
        if self._file is not None:
            self._file.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._file = None
