"""GDB Remote Serial Protocol packet layer: framing, checksum, escaping.

A frame on the wire is ``$<body>#<cc>`` where ``cc`` is the two lowercase
hex digits of (sum of body bytes) mod 256.  Body bytes ``#`` (0x23), ``$``
(0x24) and ``}`` (0x7d) always travel escaped as ``}`` followed by the byte
XOR 0x20.  The encoder additionally escapes ``*`` (0x2a) so nothing it emits
can be mistaken for a run-length sequence; the decoder expands run-length
notation (``X*n`` means n-29 extra copies of X) but the encoder never
produces it.

Acknowledgements (``+``/``-``) are not part of the frame and are handled by
the transport layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import BootscopeError

PACKET_LIMIT_DEFAULT = 4096

_ESCAPE = 0x7D
_FRAME_START = 0x24  # $
_FRAME_END = 0x23  # #
_RUN_LENGTH = 0x2A  # *

# Bytes that must never appear bare in an outgoing frame body.
_MUST_ESCAPE = frozenset((_FRAME_END, _FRAME_START, _ESCAPE, _RUN_LENGTH))


class RspError(BootscopeError):
    """Base for packet-layer failures."""


class PayloadTooLarge(RspError):
    pass


class ChecksumMismatch(RspError):
    """Frame checksum does not match its body; caller should nack with '-'."""


class TruncatedFrame(RspError):
    """The byte stream ends before the frame does; read more and retry."""


class MalformedEscape(RspError):
    """Dangling escape byte or impossible run-length sequence."""


class UnknownReplyForm(RspError):
    pass


@dataclass(frozen=True)
class RspPacket:
    """One decoded packet: logical payload plus the on-wire length consumed."""

    payload: bytes
    raw_len: int


class StopKind(Enum):
    SIGNAL = "signal"
    SIGNAL_WITH_INFO = "signal_with_info"
    EXITED = "exited"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class StopReply:
    """Parsed response to ``?``, ``c`` or ``s``.

    Exactly one of ``signal_no`` / ``exit_code`` is set: W replies carry an
    exit code, S/T/X replies carry a signal number.
    """

    kind: StopKind
    signal_no: int | None = None
    exit_code: int | None = None
    info: list[tuple[str, str]] = field(default_factory=list)

    @property
    def is_exit(self) -> bool:
        return self.kind in (StopKind.EXITED, StopKind.TERMINATED)


def checksum(data: bytes) -> int:
    """Mod-256 sum of the given bytes."""
    return sum(data) % 256


def encode_packet(payload: bytes, limit: int = PACKET_LIMIT_DEFAULT) -> bytes:
    """Frame a logical payload for the wire.

    The checksum covers the escaped body, and the size limit applies to the
    logical payload before escaping.
    """
    if len(payload) > limit:
        raise PayloadTooLarge(f"payload is {len(payload)} bytes, limit {limit}")
    body = bytearray()
    for b in payload:
        if b in _MUST_ESCAPE:
            body.append(_ESCAPE)
            body.append(b ^ 0x20)
        else:
            body.append(b)
    return b"$" + bytes(body) + b"#" + b"%02x" % checksum(bytes(body))


def decode_packet(wire: bytes) -> RspPacket:
    """Decode one frame from the start of ``wire``.

    Verifies the checksum, then unescapes and expands run-length sequences.
    ``raw_len`` on the result tells the caller how many wire bytes the frame
    occupied so the remainder of a buffered stream can be reparsed.
    """
    if not wire:
        raise TruncatedFrame("empty stream")
    if wire[0] != _FRAME_START:
        raise ValueError("frame must start with '$' (acks are consumed by the transport)")
    end = wire.find(b"#")
    if end < 0:
        raise TruncatedFrame("no '#' terminator yet")
    if len(wire) < end + 3:
        raise TruncatedFrame("checksum digits incomplete")
    body = wire[1:end]
    cc_text = wire[end + 1 : end + 3]
    try:
        wanted = int(cc_text, 16)
    except ValueError:
        raise ChecksumMismatch(f"non-hex checksum {cc_text!r}") from None
    got = checksum(body)
    if got != wanted:
        raise ChecksumMismatch(f"checksum {got:#04x}, frame says {wanted:#04x}")

    payload = bytearray()
    i = 0
    while i < len(body):
        b = body[i]
        if b == _ESCAPE:
            if i + 1 >= len(body):
                raise MalformedEscape("escape byte at end of frame body")
            payload.append(body[i + 1] ^ 0x20)
            i += 2
        elif b == _RUN_LENGTH:
            if not payload:
                raise MalformedEscape("run-length marker with no preceding byte")
            if i + 1 >= len(body):
                raise MalformedEscape("run-length marker without a count byte")
            count = body[i + 1] - 29
            if not 3 <= count <= 97:
                raise MalformedEscape(f"run-length count byte {body[i + 1]:#04x} out of range")
            payload.extend(payload[-1:] * count)
            i += 2
        else:
            payload.append(b)
            i += 1
    return RspPacket(payload=bytes(payload), raw_len=end + 3)


def _hex_byte(text: str, what: str) -> int:
    if len(text) != 2:
        raise UnknownReplyForm(f"{what} must be two hex digits, got {text!r}")
    try:
        return int(text, 16)
    except ValueError:
        raise UnknownReplyForm(f"{what} must be two hex digits, got {text!r}") from None


def parse_stop_reply(payload: bytes) -> StopReply:
    """Classify an S/T/W/X stop reply payload."""
    text = payload.decode("ascii", errors="replace")
    if not text:
        raise UnknownReplyForm("empty stop reply")
    lead, rest = text[0], text[1:]
    if lead == "S":
        return StopReply(kind=StopKind.SIGNAL, signal_no=_hex_byte(rest, "signal number"))
    if lead == "T":
        signal_no = _hex_byte(rest[:2], "signal number")
        info: list[tuple[str, str]] = []
        for pair in rest[2:].split(";"):
            if not pair:
                continue
            if ":" not in pair:
                raise UnknownReplyForm(f"T reply pair without ':' separator: {pair!r}")
            key, value = pair.split(":", 1)
            info.append((key, value))
        return StopReply(kind=StopKind.SIGNAL_WITH_INFO, signal_no=signal_no, info=info)
    if lead == "W":
        # Some stubs append ";process:<pid>"; the exit code is the two digits.
        return StopReply(kind=StopKind.EXITED, exit_code=_hex_byte(rest.split(";")[0], "exit code"))
    if lead == "X":
        return StopReply(
            kind=StopKind.TERMINATED, signal_no=_hex_byte(rest.split(";")[0], "signal number")
        )
    raise UnknownReplyForm(f"unrecognized stop reply {text!r}")
