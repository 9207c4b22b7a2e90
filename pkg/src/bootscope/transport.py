"""One TCP link to a gdbstub: framed request/response with acks and retries.

The link is a strict request/response state machine: idle, one command in
flight, back to idle.  A ``-`` nack from the stub triggers a bit-identical
retransmission of the previous frame, bounded by ``max_retries``.  A timeout
poisons the link (no silent reuse of a half-open socket): it must be
reconnected before further use.
"""

from __future__ import annotations

import logging
import socket
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import rsp
from .errors import BootscopeError

log = logging.getLogger(__name__)

DEFAULT_PORT = 1234  # conventional emulator gdbstub port (`qemu -s`)


class TransportError(BootscopeError):
    pass


class ConnectFailed(TransportError):
    def __init__(self, address: str, cause: Exception):
        super().__init__(f"cannot connect to {address}: {cause}")
        self.address = address
        self.cause = cause


class Timeout(TransportError):
    pass


class RetriesExhausted(TransportError):
    pass


class LinkClosed(TransportError):
    pass


class BusyLink(TransportError):
    """exchange() was re-entered while a command is already in flight."""


class LinkState(Enum):
    DISCONNECTED = "disconnected"
    IDLE = "idle"
    AWAITING_RESPONSE = "awaiting_response"


@dataclass(frozen=True)
class LinkConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    response_timeout: float = 5.0
    max_retries: int = 3

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range 1-65535")
        if self.response_timeout <= 0:
            raise ValueError("response_timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Link:
    """A connected RSP client link.  One logical owner; not thread-safe.

    ``on_wire`` (if given) is called with ("send"|"recv", bytes) for every
    chunk that crosses the socket; tests and debug logging hook in there.
    """

    def __init__(self, config: LinkConfig, sock: socket.socket,
                 on_wire: Callable[[str, bytes], None] | None = None):
        self.config = config
        self._sock: socket.socket | None = sock
        self.state = LinkState.IDLE
        self.on_wire = on_wire
        self._rxbuf = bytearray()

    @property
    def connected(self) -> bool:
        return self.state is not LinkState.DISCONNECTED

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None
        self.state = LinkState.DISCONNECTED

    def _send(self, data: bytes) -> None:
        assert self._sock is not None
        if self.on_wire:
            self.on_wire("send", data)
        try:
            self._sock.sendall(data)
        except OSError as exc:
            self.close()
            raise LinkClosed(f"send failed: {exc}") from exc

    def _recv(self) -> bytes:
        assert self._sock is not None
        try:
            data = self._sock.recv(4096)
        except socket.timeout:
            self.close()
            raise Timeout(f"no response within {self.config.response_timeout}s") from None
        except OSError as exc:
            self.close()
            raise LinkClosed(f"receive failed: {exc}") from exc
        if not data:
            self.close()
            raise LinkClosed("peer closed the connection")
        if self.on_wire:
            self.on_wire("recv", data)
        return data

    def _read_ack(self) -> bool:
        """True for '+', False for '-'; skips stray bytes in between."""
        while True:
            while self._rxbuf:
                b = self._rxbuf.pop(0)
                if b == 0x2B:
                    return True
                if b == 0x2D:
                    return False
                log.debug("skipping stray byte %#04x while waiting for ack", b)
            self._rxbuf += self._recv()

    def _read_frame(self) -> rsp.RspPacket:
        """Blocks until a full, checksum-valid frame is buffered.

        On checksum failure, nacks and waits for the retransmission, up to
        max_retries times.
        """
        nacks = 0
        while True:
            start = self._rxbuf.find(b"$")
            if start >= 0:
                if start:
                    log.debug("dropping %d stray bytes before frame start", start)
                    del self._rxbuf[:start]
                try:
                    pkt = rsp.decode_packet(bytes(self._rxbuf))
                except rsp.TruncatedFrame:
                    pass
                except rsp.ChecksumMismatch:
                    end = self._rxbuf.find(b"#")
                    del self._rxbuf[: end + 3 if end >= 0 else len(self._rxbuf)]
                    nacks += 1
                    if nacks > self.config.max_retries:
                        raise RetriesExhausted(
                            f"{nacks} corrupt frames in a row"
                        ) from None
                    self._send(b"-")
                    continue
                else:
                    del self._rxbuf[: pkt.raw_len]
                    self._send(b"+")
                    return pkt
            self._rxbuf += self._recv()

    def exchange(self, payload: bytes | str) -> rsp.RspPacket:
        """Send one command and return the stub's decoded response."""
        if isinstance(payload, str):
            payload = payload.encode("ascii")
        if self.state is LinkState.DISCONNECTED:
            raise LinkClosed("link is disconnected")
        if self.state is LinkState.AWAITING_RESPONSE:
            raise BusyLink("a command is already in flight")
        self.state = LinkState.AWAITING_RESPONSE
        try:
            frame = rsp.encode_packet(payload)
            self._send(frame)
            sends = 0
            while not self._read_ack():
                sends += 1
                if sends > self.config.max_retries:
                    raise RetriesExhausted(f"stub nacked frame {sends} times")
                self._send(frame)  # bit-identical retransmission
            return self._read_frame()
        finally:
            # A transport error has already marked the link disconnected;
            # don't resurrect it here.
            if self.state is LinkState.AWAITING_RESPONSE:
                self.state = LinkState.IDLE


def connect(config: LinkConfig | None = None,
            on_wire: Callable[[str, bytes], None] | None = None) -> Link:
    """Open a TCP connection to the stub described by config."""
    config = config or LinkConfig()
    address = f"{config.host}:{config.port}"
    try:
        sock = socket.create_connection((config.host, config.port), timeout=config.response_timeout)
    except OSError as exc:
        raise ConnectFailed(address, exc) from exc
    sock.settimeout(config.response_timeout)
    # Request/response with tiny frames: Nagle would add ~40ms per hop.
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    log.info("connected to gdbstub at %s", address)
    return Link(config, sock, on_wire=on_wire)
