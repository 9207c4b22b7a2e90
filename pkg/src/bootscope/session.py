"""Debug session engine: run control, breakpoints, inspection.

A session owns one transport link plus the symbol/line tables for the image
the target is executing.  Commands are synchronous and permitted only while
the target is stopped; the phase flips to ``running`` for the duration of a
step/continue operation and settles back to ``stopped`` or ``exited`` with
the stub's stop reply.

Breakpoints prefer the stub's ``Z0`` support.  When the stub answers ``Z0``
with an empty (unsupported) reply, the session falls back to patching a
one-byte trap opcode (0xCC) into target memory, remembering the original
byte.  Resuming from a patched address uses the standard dance: restore the
byte, single-step, re-patch, then continue.  The dance is internal: one
``running`` and one ``stopped``/``exited`` event per public operation.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import rsp
from .errors import BootscopeError
from .registers import RegisterFile, RegisterLayout
from .symbolics import LineMap, Location, SymbolIndex, resolve_addr
from .transport import Link

log = logging.getLogger(__name__)

TRAP_OPCODE = 0xCC
_ERROR_REPLY = re.compile(rb"^E[0-9a-fA-F]{2}$")


class SessionError(BootscopeError):
    pass


class SessionPhaseError(SessionError):
    """A command was issued in a phase that does not permit it."""


class StubError(SessionError):
    def __init__(self, command: str, code: str):
        super().__init__(f"stub replied {code} to {command!r}")
        self.command = command
        self.code = code


class MemoryUnreadable(SessionError):
    def __init__(self, addr: int):
        super().__init__(f"memory at {addr:#x} is unreadable")
        self.addr = addr


class SessionPhase(Enum):
    DISCONNECTED = "disconnected"
    STOPPED = "stopped"
    RUNNING = "running"
    EXITED = "exited"


@dataclass
class Breakpoint:
    id: int
    address: int
    origin: tuple
    mechanism: str  # "stub_z0" or "patched_trap"
    original_byte: int | None = None
    enabled: bool = True
    hit_count: int = 0

    def describe(self) -> str:
        kind, *detail = self.origin
        origin = {"symbol": lambda: detail[0],
                  "line": lambda: f"{detail[0]}:{detail[1]}",
                  "raw": lambda: f"{self.address:#x}"}[kind]()
        return f"breakpoint {self.id} at {self.address:#x} ({origin}) [{self.mechanism}]"


@dataclass(frozen=True)
class StopEvent:
    pc: int | None
    location: Location | None
    reply: rsp.StopReply

    @property
    def exited(self) -> bool:
        return self.reply.is_exit


class Session:
    """One live connection to a stopped-or-running target."""

    def __init__(self, link: Link, symbols: SymbolIndex, lines: LineMap,
                 layout: RegisterLayout | None = None):
        self.link = link
        self.symbols = symbols
        self.lines = lines
        self.layout = layout or RegisterLayout.i386()
        self.phase = SessionPhase.DISCONNECTED
        self.current_pc: int | None = None
        self.last_stop: rsp.StopReply | None = None
        self.breakpoints: dict[int, Breakpoint] = {}
        self.packet_limit = rsp.PACKET_LIMIT_DEFAULT
        self._ids = itertools.count(1)
        self._listeners: list[Callable[[str, dict], None]] = []

    # -- events ------------------------------------------------------------

    def add_listener(self, fn: Callable[[str, dict], None]) -> None:
        self._listeners.append(fn)

    def _emit(self, kind: str, **payload) -> None:
        for fn in list(self._listeners):
            fn(kind, payload)

    # -- plumbing ----------------------------------------------------------

    def _require_stopped(self, what: str) -> None:
        if self.phase is not SessionPhase.STOPPED:
            raise SessionPhaseError(f"{what} requires a stopped target (phase: {self.phase.value})")

    def _command(self, payload: str) -> bytes:
        reply = self.link.exchange(payload).payload
        if _ERROR_REPLY.match(reply):
            raise StubError(payload, reply.decode("ascii"))
        return reply

    def _refresh_pc(self) -> int:
        regs = RegisterFile.decode(self.layout, self._command("g"))
        self.current_pc = regs.pc
        return regs.pc

    def _settle(self, reply: rsp.StopReply) -> StopEvent:
        """Fold a stop reply into the session phase and emit the event."""
        self.last_stop = reply
        if reply.is_exit:
            self.phase = SessionPhase.EXITED
            self.current_pc = None
            self._emit("exited", exit_code=reply.exit_code, signal_no=reply.signal_no)
            return StopEvent(pc=None, location=None, reply=reply)
        self.phase = SessionPhase.STOPPED
        pc = self._refresh_pc()
        location = resolve_addr(self.symbols, self.lines, pc)
        self._emit("stopped", pc=pc, location=location, reason=reply.kind.value)
        return StopEvent(pc=pc, location=location, reply=reply)

    # -- lifecycle ----------------------------------------------------------

    def attach(self) -> StopEvent:
        """Negotiate packet size, query the halt reason, learn the pc."""
        supported = self.link.exchange("qSupported").payload.decode("ascii", "replace")
        for feature in supported.split(";"):
            if feature.startswith("PacketSize="):
                try:
                    self.packet_limit = int(feature.split("=", 1)[1], 16)
                except ValueError:
                    log.warning("ignoring unparseable %r", feature)
        reply = rsp.parse_stop_reply(self.link.exchange("?").payload)
        return self._settle(reply)

    def close(self) -> None:
        """Undo breakpoint patches where possible, then drop the link."""
        if self.phase is SessionPhase.STOPPED:
            try:
                self.remove_all_breakpoints()
            except BootscopeError as exc:
                log.warning("breakpoint cleanup failed on close: %s", exc)
        self.breakpoints.clear()
        self.link.close()
        self.phase = SessionPhase.DISCONNECTED

    # -- breakpoints ---------------------------------------------------------

    def _resolve_origin(self, symbol: str | None, file: str | None,
                        line: int | None, address: int | None) -> tuple[int, tuple]:
        given = [x is not None for x in (symbol, file, address)]
        if sum(given) != 1 or (file is None) != (line is None):
            raise ValueError("specify exactly one of symbol=, file=+line=, address=")
        if symbol is not None:
            return self.symbols.by_name(symbol).address, ("symbol", symbol)
        if file is not None:
            assert line is not None
            return self.lines.address_of(file, line), ("line", file, line)
        assert address is not None
        return address, ("raw", address)

    def breakpoint_at(self, addr: int) -> Breakpoint | None:
        for bp in self.breakpoints.values():
            if bp.address == addr:
                return bp
        return None

    def set_breakpoint(self, symbol: str | None = None, file: str | None = None,
                       line: int | None = None, address: int | None = None) -> Breakpoint:
        self._require_stopped("set_breakpoint")
        addr, origin = self._resolve_origin(symbol, file, line, address)
        existing = self.breakpoint_at(addr)
        if existing is not None:
            return existing

        bp = Breakpoint(id=next(self._ids), address=addr, origin=origin, mechanism="stub_z0")
        reply = self._command(f"Z0,{addr:x},1")
        if reply != b"OK":
            # Empty reply: stub has no Z0 support; patch a trap byte instead.
            bp.mechanism = "patched_trap"
            bp.original_byte = self.read_memory(addr, 1)[0]
            self.write_memory(addr, bytes([TRAP_OPCODE]))
        self.breakpoints[bp.id] = bp
        self._emit("breakpoint_changed", action="added", breakpoint=bp)
        log.info("%s", bp.describe())
        return bp

    def _disarm(self, bp: Breakpoint) -> None:
        if bp.mechanism == "stub_z0":
            self._command(f"z0,{bp.address:x},1")
        else:
            assert bp.original_byte is not None
            self.write_memory(bp.address, bytes([bp.original_byte]))

    def _arm(self, bp: Breakpoint) -> None:
        if bp.mechanism == "stub_z0":
            self._command(f"Z0,{bp.address:x},1")
        else:
            # Re-read the original byte: memory may have changed while unarmed.
            bp.original_byte = self.read_memory(bp.address, 1)[0]
            self.write_memory(bp.address, bytes([TRAP_OPCODE]))

    def remove_breakpoint(self, bp_id: int) -> None:
        self._require_stopped("remove_breakpoint")
        bp = self.breakpoints.pop(bp_id, None)
        if bp is None:
            raise SessionError(f"no breakpoint with id {bp_id}")
        if bp.enabled:
            self._disarm(bp)
        self._emit("breakpoint_changed", action="removed", breakpoint=bp)

    def enable_breakpoint(self, bp_id: int, enabled: bool = True) -> Breakpoint:
        self._require_stopped("enable_breakpoint")
        bp = self.breakpoints.get(bp_id)
        if bp is None:
            raise SessionError(f"no breakpoint with id {bp_id}")
        if enabled and not bp.enabled:
            self._arm(bp)
        elif not enabled and bp.enabled:
            self._disarm(bp)
        bp.enabled = enabled
        self._emit("breakpoint_changed", action="enabled" if enabled else "disabled", breakpoint=bp)
        return bp

    def remove_all_breakpoints(self) -> None:
        for bp_id in list(self.breakpoints):
            self.remove_breakpoint(bp_id)

    # -- run control ---------------------------------------------------------

    def _patched_bp_here(self) -> Breakpoint | None:
        if self.current_pc is None:
            return None
        bp = self.breakpoint_at(self.current_pc)
        if bp is not None and bp.enabled and bp.mechanism == "patched_trap":
            return bp
        return None

    def _poke(self, addr: int, data: bytes) -> None:
        # Internal write used mid-operation; the target is stopped at every
        # exchange even though the session phase reads "running".
        self._command(f"M{addr:x},{len(data):x}:{data.hex()}")

    def _run_exchange(self, command: str) -> rsp.StopReply:
        try:
            return rsp.parse_stop_reply(self._command(command))
        except BaseException:
            # Transport/protocol failure mid-run: we no longer know the
            # target state, so don't pretend to be stopped.
            self.phase = SessionPhase.DISCONNECTED
            raise

    def _peek_pc(self) -> int:
        return RegisterFile.decode(self.layout, self._command("g")).pc

    def step(self) -> StopEvent:
        """Advance one instruction (one scripted pc on the mock)."""
        self._require_stopped("step")
        bp = self._patched_bp_here()
        if bp is not None:
            assert bp.original_byte is not None
            self.write_memory(bp.address, bytes([bp.original_byte]))
        self.phase = SessionPhase.RUNNING
        self._emit("running")
        reply = self._run_exchange("s")
        if bp is not None and not reply.is_exit:
            self._poke(bp.address, bytes([TRAP_OPCODE]))
        return self._settle(reply)

    def continue_run(self) -> StopEvent:
        """Resume until the next breakpoint hit or target exit."""
        self._require_stopped("continue_run")
        bp = self._patched_bp_here()
        if bp is not None:
            assert bp.original_byte is not None
            self.write_memory(bp.address, bytes([bp.original_byte]))
        self.phase = SessionPhase.RUNNING
        self._emit("running")

        if bp is not None:
            reply = self._run_exchange("s")
            if reply.is_exit:
                return self._settle(reply)
            self._poke(bp.address, bytes([TRAP_OPCODE]))
            landed = self.breakpoint_at(self._peek_pc())
            if landed is not None and landed.enabled:
                # The step over the trap landed directly on another
                # breakpoint: report that stop instead of running past it.
                return self._record_hit(landed, self._settle(reply))

        reply = self._run_exchange("c")
        event = self._settle(reply)
        if event.pc is not None:
            hit = self.breakpoint_at(event.pc)
            if hit is not None and hit.enabled:
                return self._record_hit(hit, event)
        return event

    def _record_hit(self, bp: Breakpoint, event: StopEvent) -> StopEvent:
        bp.hit_count += 1
        self._emit("breakpoint_changed", action="hit", breakpoint=bp)
        return event

    # -- inspection ----------------------------------------------------------

    @property
    def _chunk_limit(self) -> int:
        # Memory replies are hex (two chars per byte) and must fit the
        # advertised packet size with slack for the command header.
        return max(1, (self.packet_limit - 32) // 2)

    def read_memory(self, addr: int, length: int) -> bytes:
        self._require_stopped("read_memory")
        if length == 0:
            return b""
        out = bytearray()
        pos = addr
        remaining = length
        while remaining > 0:
            n = min(self._chunk_limit, remaining)
            try:
                reply = self._command(f"m{pos:x},{n:x}")
            except StubError as exc:
                raise MemoryUnreadable(pos) from exc
            try:
                part = bytes.fromhex(reply.decode("ascii"))
            except (UnicodeDecodeError, ValueError) as exc:
                raise SessionError(f"non-hex memory reply {reply!r}") from exc
            if not part:
                raise SessionError(f"stub returned no data for {n} bytes at {pos:#x}")
            out += part
            pos += len(part)
            remaining -= len(part)
        return bytes(out)

    def write_memory(self, addr: int, data: bytes) -> None:
        self._require_stopped("write_memory")
        for off in range(0, len(data), self._chunk_limit):
            part = data[off : off + self._chunk_limit]
            self._command(f"M{addr + off:x},{len(part):x}:{part.hex()}")

    def read_registers(self) -> RegisterFile:
        self._require_stopped("read_registers")
        regs = RegisterFile.decode(self.layout, self._command("g"))
        self.current_pc = regs.pc
        return regs

    def current_location(self) -> Location:
        self._require_stopped("current_location")
        assert self.current_pc is not None
        return resolve_addr(self.symbols, self.lines, self.current_pc)


def attach(link: Link, symbols: SymbolIndex, lines: LineMap,
           layout: RegisterLayout | None = None) -> Session:
    """Create a session on an idle link and synchronize with the target."""
    session = Session(link, symbols, lines, layout=layout)
    session.attach()
    return session
