"""Scripted gdbstub server for hermetic end-to-end testing.

There is no CPU emulation here: a :class:`TargetScript` declares a flat
memory image, an initial register file and the exact sequence of pc values
the fake execution visits.  ``s`` advances one trace position, ``c`` runs to
the next trace pc that carries a breakpoint (a stub-side Z0 entry, or a
0xCC byte patched into the image at that pc), and running off the end of the
trace reports exit ``W00``.

Script files are JSON next to a flat binary memory image::

    {
      "memory":    {"base": "0x7000", "image": "image.bin"},
      "entry_pc":  "0x7000",
      "trace":     ["0x7000", "0x7010", ...],
      "registers": {"ESP": "0x8f00"},
      "features":  {"z0_supported": true, "packet_size": 4096}
    }

One client is served at a time; extra connections are refused while one is
active, and every connection starts from the pristine script state.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import rsp
from .errors import BootscopeError
from .registers import RegisterFile, RegisterLayout

log = logging.getLogger(__name__)

TRAP_OPCODE = 0xCC

# Built-in boot fixture geometry: a fake firmware shim, then the classic
# boot chain.  The MBR sits at 0x7c00 with its partition table at +0x1be
# (4 records x 16 bytes) and the 0x55 0xaa signature in the last two bytes.
FIXTURE_MEMORY_BASE = 0x7000
FIXTURE_MEMORY_SIZE = 0x2000
FIXTURE_ENTRY = 0x7000
BOOT_SECTOR = 0x7C00
PARTITION_TABLE_OFFSET = 0x1BE
PARTITION_RECORD_SIZE = 16
PARTITION_RECORD_COUNT = 4

FIXTURE_MILESTONES = {
    "boot0": 0x7C00,
    "boot2": 0x7E00,
    "loader": 0x7F00,
    "init386": 0x8000,
}

_FIXTURE_LINE_ROWS = [
    (0x7000, "boot/reset.S", 5),
    (0x7010, "boot/reset.S", 6),
    (0x7C00, "boot/boot0.S", 12),
    (0x7C10, "boot/boot0.S", 13),
    (0x7E00, "boot/boot2.c", 40),
    (0x7E10, "boot/boot2.c", 41),
    (0x7F00, "boot/loader.c", 80),
    (0x7F10, "boot/loader.c", 81),
    (0x8000, "kern/machdep.c", 120),
    (0x8010, "kern/machdep.c", 121),
]


class MockTargetError(BootscopeError):
    pass


class BindFailed(MockTargetError):
    pass


@dataclass
class TargetScript:
    """Deterministic fake target: memory image plus a scripted pc trace."""

    memory_base: int
    memory: bytes
    entry_pc: int
    trace: list[int]
    registers: dict[str, int] = field(default_factory=dict)
    layout: RegisterLayout = field(default_factory=RegisterLayout.i386)
    z0_supported: bool = True
    packet_size: int = 4096
    external_pcs: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.trace:
            raise ValueError("trace must not be empty")
        if self.entry_pc != self.trace[0]:
            raise ValueError("entry_pc must equal trace[0]")
        lo, hi = self.memory_base, self.memory_base + len(self.memory)
        for pc in self.trace:
            if not lo <= pc < hi and pc not in self.external_pcs:
                raise ValueError(f"trace pc {pc:#x} outside memory and not flagged external")

    def contains(self, addr: int, length: int = 1) -> bool:
        return (
            self.memory_base <= addr
            and addr + length <= self.memory_base + len(self.memory)
            and length >= 0
        )

    def save(self, directory: Path | str) -> Path:
        """Write script.json plus the flat image.bin; returns the json path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "image.bin").write_bytes(self.memory)
        doc = {
            "memory": {"base": hex(self.memory_base), "image": "image.bin"},
            "entry_pc": hex(self.entry_pc),
            "trace": [hex(pc) for pc in self.trace],
            "registers": {name: hex(v) for name, v in self.registers.items()},
            "features": {"z0_supported": self.z0_supported, "packet_size": self.packet_size},
        }
        path = directory / "script.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path: Path | str) -> "TargetScript":
        path = Path(path)
        doc = json.loads(path.read_text())
        image = (path.parent / doc["memory"]["image"]).read_bytes()
        features = doc.get("features", {})
        return cls(
            memory_base=int(doc["memory"]["base"], 16),
            memory=image,
            entry_pc=int(doc["entry_pc"], 16),
            trace=[int(pc, 16) for pc in doc["trace"]],
            registers={k: int(v, 16) for k, v in doc.get("registers", {}).items()},
            z0_supported=bool(features.get("z0_supported", True)),
            packet_size=int(features.get("packet_size", 4096)),
        )


class _TargetState:
    """Per-connection mutable copy of the script."""

    def __init__(self, script: TargetScript):
        self.script = script
        self.memory = bytearray(script.memory)
        self.pos = 0
        self.exited = False
        self.z0_breaks: set[int] = set()
        self.regs = RegisterFile(layout=script.layout, values=dict(script.registers))
        self.regs.values[script.layout.pc_name] = script.entry_pc

    @property
    def pc(self) -> int:
        return self.script.trace[self.pos]

    def advance_to(self, pos: int) -> None:
        self.pos = pos
        self.regs.values[self.script.layout.pc_name] = self.pc

    def trap_patched(self, pc: int) -> bool:
        off = pc - self.script.memory_base
        return 0 <= off < len(self.memory) and self.memory[off] == TRAP_OPCODE


class StubServer:
    """Serves one TargetScript over RSP on a TCP port."""

    def __init__(self, script: TargetScript, host: str = "127.0.0.1", port: int = 0):
        self.script = script
        self.host = host
        self.port = port
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._running = threading.Event()
        self._active_conn = threading.Event()

    def start(self) -> "StubServer":
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.host, self.port))
        except OSError as exc:
            sock.close()
            raise BindFailed(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        sock.listen(4)
        sock.settimeout(0.2)
        self.port = sock.getsockname()[1]
        self._sock = sock
        self._running.set()
        self._thread = threading.Thread(target=self._accept_loop, name="mock-stub", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._running.clear()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "StubServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _accept_loop(self) -> None:
        assert self._sock is not None
        handlers: list[threading.Thread] = []
        while self._running.is_set():
            try:
                conn, addr = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            if self._active_conn.is_set():
                log.info("refusing second client %s while one is active", addr)
                conn.close()
                continue
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._active_conn.set()
            t = threading.Thread(target=self._serve_client, args=(conn,), daemon=True)
            t.start()
            handlers.append(t)
        for t in handlers:
            t.join(timeout=1)

    def _serve_client(self, conn: socket.socket) -> None:
        state = _TargetState(self.script)
        buf = bytearray()
        last_response = b""
        conn.settimeout(0.2)
        try:
            while self._running.is_set():
                try:
                    data = conn.recv(4096)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                buf += data
                last_response = self._drain(conn, buf, state, last_response)
        finally:
            conn.close()
            self._active_conn.clear()

    def _drain(self, conn: socket.socket, buf: bytearray, state: "_TargetState",
               last_response: bytes) -> bytes:
        """Process every complete frame/ack in buf; returns the latest response."""
        while buf:
            lead = buf[0]
            if lead == 0x2B:  # '+' ack for our previous response
                del buf[:1]
                continue
            if lead == 0x2D:  # '-' nack: retransmit bit-identically
                del buf[:1]
                if last_response:
                    conn.sendall(last_response)
                continue
            if lead != 0x24:  # stray byte outside a frame
                del buf[:1]
                continue
            try:
                pkt = rsp.decode_packet(bytes(buf))
            except rsp.TruncatedFrame:
                break
            except (rsp.ChecksumMismatch, rsp.MalformedEscape):
                end = buf.find(b"#")
                del buf[: end + 3 if end >= 0 else len(buf)]
                conn.sendall(b"-")
                continue
            del buf[: pkt.raw_len]
            conn.sendall(b"+")
            reply = self._handle(state, pkt.payload)
            last_response = rsp.encode_packet(reply, limit=1 << 20)
            conn.sendall(last_response)
        return last_response

    def _handle(self, state: _TargetState, payload: bytes) -> bytes:
        text = payload.decode("ascii", errors="replace")
        if text.startswith("qSupported"):
            return b"PacketSize=%x" % self.script.packet_size
        if text == "?":
            return b"W00" if state.exited else b"S05"
        if text == "g":
            return state.regs.encode()
        if text.startswith("G"):
            try:
                state.regs = RegisterFile.decode(state.regs.layout, text[1:].encode())
            except Exception:
                return b"E02"
            return b"OK"
        if text.startswith("m"):
            return self._read_mem(state, text[1:])
        if text.startswith("M"):
            return self._write_mem(state, text[1:])
        if text == "s":
            return self._step(state)
        if text == "c":
            return self._continue(state)
        if text.startswith("Z0,"):
            if not self.script.z0_supported:
                return b""
            state.z0_breaks.add(int(text.split(",")[1], 16))
            return b"OK"
        if text.startswith("z0,"):
            if not self.script.z0_supported:
                return b""
            state.z0_breaks.discard(int(text.split(",")[1], 16))
            return b"OK"
        return b""  # unsupported command

    def _read_mem(self, state: _TargetState, args: str) -> bytes:
        try:
            addr_text, len_text = args.split(",")
            addr, length = int(addr_text, 16), int(len_text, 16)
        except ValueError:
            return b"E02"
        if not self.script.contains(addr, length):
            return b"E01"
        off = addr - self.script.memory_base
        return state.memory[off : off + length].hex().encode("ascii")

    def _write_mem(self, state: _TargetState, args: str) -> bytes:
        try:
            head, hex_data = args.split(":")
            addr_text, len_text = head.split(",")
            addr, length = int(addr_text, 16), int(len_text, 16)
            data = bytes.fromhex(hex_data)
        except ValueError:
            return b"E02"
        if len(data) != length:
            return b"E02"
        if not self.script.contains(addr, length):
            return b"E01"
        off = addr - self.script.memory_base
        state.memory[off : off + length] = data
        return b"OK"

    def _step(self, state: _TargetState) -> bytes:
        if state.exited or state.pos + 1 >= len(self.script.trace):
            state.exited = True
            return b"W00"
        state.advance_to(state.pos + 1)
        return b"S05"

    def _continue(self, state: _TargetState) -> bytes:
        if state.exited:
            return b"W00"
        for i in range(state.pos + 1, len(self.script.trace)):
            pc = self.script.trace[i]
            if pc in state.z0_breaks or state.trap_patched(pc):
                state.advance_to(i)
                return b"S05"
        state.exited = True
        return b"W00"


def serve(script: TargetScript, port: int = 0, host: str = "127.0.0.1") -> StubServer:
    """Start a stub for the script; returns the running server handle."""
    return StubServer(script, host=host, port=port).start()


def _partition_record(fs_type: int, bootable: int, chs: bytes, lba_start: int, lba_len: int) -> bytes:
    # Field order: filesystem type, bootable flag, 6-byte CHS, 8-byte LBA.
    return bytes([fs_type, bootable]) + chs + struct.pack("<II", lba_start, lba_len)


def build_boot_fixture(z0_supported: bool = True, packet_size: int = 4096) -> TargetScript:
    """The built-in deterministic boot target.

    Its trace walks the boot chain in canonical order (boot0, boot2, loader,
    init386) with one intermediate pc after each stage, and its memory
    carries a plausible MBR: partition table at 0x7c00+0x1be, signature
    0x55 0xaa at the end of the sector.
    """
    memory = bytearray(b"\x90" * FIXTURE_MEMORY_SIZE)

    def put(addr: int, data: bytes) -> None:
        memory[addr - FIXTURE_MEMORY_BASE : addr - FIXTURE_MEMORY_BASE + len(data)] = data

    put(FIXTURE_ENTRY, b"\xea")  # far jump out of the reset shim
    put(FIXTURE_MILESTONES["boot0"], b"\xfa")  # cli, the classic MBR opener
    for name in ("boot2", "loader", "init386"):
        put(FIXTURE_MILESTONES[name], b"\x55")  # push ebp

    table = BOOT_SECTOR + PARTITION_TABLE_OFFSET
    records = [
        _partition_record(0xA5, 0x80, bytes([0, 1, 1, 0xFE, 0x3F, 0x3F]), 63, 204800),
        _partition_record(0x00, 0x00, bytes(6), 0, 0),
        _partition_record(0x00, 0x00, bytes(6), 0, 0),
        _partition_record(0x00, 0x00, bytes(6), 0, 0),
    ]
    put(table, b"".join(records))
    put(BOOT_SECTOR + 0x1FE, b"\x55\xaa")

    trace = []
    for start in (FIXTURE_ENTRY, *FIXTURE_MILESTONES.values()):
        trace.extend((start, start + 0x10))

    return TargetScript(
        memory_base=FIXTURE_MEMORY_BASE,
        memory=bytes(memory),
        entry_pc=FIXTURE_ENTRY,
        trace=trace,
        registers={"ESP": 0x8F00, "EFLAGS": 0x2},
        z0_supported=z0_supported,
        packet_size=packet_size,
    )


def boot_fixture_symbol_map() -> str:
    """nm-style symbol rows matching the boot fixture."""
    rows = ["%08x t reset_vector" % FIXTURE_ENTRY]
    rows += ["%08x T %s" % (addr, name) for name, addr in FIXTURE_MILESTONES.items()]
    return "\n".join(rows) + "\n"


def boot_fixture_line_map() -> str:
    """Line-map rows (hexaddr<TAB>file<TAB>line) for every fixture trace pc."""
    return "".join(f"{addr:08x}\t{file}\t{line}\n" for addr, file, line in _FIXTURE_LINE_ROWS)


def boot_fixture_sources() -> dict[str, str]:
    """Fake source files whose line numbers match the fixture line map."""
    mapped: dict[str, list[tuple[int, str]]] = {}
    snippets = {
        ("boot/reset.S", 5): "        jmp     boot_entry",
        ("boot/reset.S", 6): "        hlt",
        ("boot/boot0.S", 12): "        cli",
        ("boot/boot0.S", 13): "        xor     %ax, %ax",
        ("boot/boot2.c", 40): "    disk = scan_disks();",
        ("boot/boot2.c", 41): "    file = lookup(disk, \"/boot/loader\");",
        ("boot/loader.c", 80): "    kernel = load_kernel_image(path);",
        ("boot/loader.c", 81): "    enter_kernel(kernel);",
        ("kern/machdep.c", 120): "    setup_descriptor_tables();",
        ("kern/machdep.c", 121): "    init_proc0_pcb();",
    }
    for (file, line), code in snippets.items():
        mapped.setdefault(file, []).append((line, code))
    sources = {}
    for file, rows in mapped.items():
        comment = ";" if file.endswith(".S") else "//"
        n_lines = max(line for line, _ in rows)
        lines = [f"{comment} {file}: scripted demo source, line {i}" for i in range(1, n_lines + 1)]
        for line, code in rows:
            lines[line - 1] = code
        sources[file] = "\n".join(lines) + "\n"
    return sources
