"""HTTP + server-sent-events API for driving debug sessions from a UI.

All bodies are JSON with stable field names.  Each session runs behind its
own single worker thread: HTTP handlers enqueue a command and wait for the
result, so target interaction stays strictly sequential no matter how many
clients talk to the server.  Session state changes fan out on an ordered,
gapless event stream (``id:`` carries the per-session sequence number, so a
client can resume with ``Last-Event-ID`` or ``?after=``).

Status codes: 400 invalid request, 404 unknown session/resource, 409 command
issued in the wrong phase, 500 internal failure.
"""

from __future__ import annotations

import itertools
import json
import logging
import queue
import tempfile
import threading
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .. import __version__, boottrace, mocktarget, perfmodel, transport
from ..errors import BootscopeError
from ..mocktarget import StubServer
from ..registers import RegisterLayout
from ..session import Breakpoint, Session, SessionPhaseError
from ..symbolics import (
    LineMap,
    Location,
    SymbolIndex,
    UnknownLine,
    UnknownSymbol,
    load_elf_symbols,
    load_line_map,
    load_symbol_map,
    resolve_addr,
)

log = logging.getLogger(__name__)

_EVENT_HISTORY = 4096
_CLOSE = object()


# -- events --------------------------------------------------------------------


@dataclass(frozen=True)
class ApiEvent:
    seq: int
    kind: str
    payload: dict

    def sse(self) -> str:
        data = json.dumps({"seq": self.seq, "kind": self.kind, **self.payload})
        return f"id: {self.seq}\nevent: {self.kind}\ndata: {data}\n\n"


class EventHub:
    """Ordered per-session event fan-out with replayable history."""

    def __init__(self):
        self._lock = threading.Lock()
        self._seq = 0
        self._history: deque[ApiEvent] = deque(maxlen=_EVENT_HISTORY)
        self._subscribers: list[queue.Queue] = []

    def publish(self, kind: str, payload: dict) -> ApiEvent:
        with self._lock:
            self._seq += 1
            event = ApiEvent(seq=self._seq, kind=kind, payload=payload)
            self._history.append(event)
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(event)
        return event

    def subscribe(self, after_seq: int = 0) -> tuple[queue.Queue, list[ApiEvent]]:
        with self._lock:
            replay = [e for e in self._history if e.seq > after_seq]
            q: queue.Queue = queue.Queue()
            self._subscribers.append(q)
        return q, replay

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def close(self) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(_CLOSE)


# -- serialization ---------------------------------------------------------------


def location_dict(location: Location | None) -> dict | None:
    if location is None:
        return None
    return {
        "address": location.address,
        "symbol": location.symbol,
        "offset": location.offset,
        "file": location.file,
        "line": location.line,
        "display": location.describe(),
    }


def breakpoint_dict(bp: Breakpoint) -> dict:
    kind, *detail = bp.origin
    origin: dict[str, Any] = {"kind": kind}
    if kind == "symbol":
        origin["symbol"] = detail[0]
    elif kind == "line":
        origin["file"], origin["line"] = detail
    else:
        origin["address"] = detail[0]
    return {
        "id": bp.id,
        "address": bp.address,
        "origin": origin,
        "mechanism": bp.mechanism,
        "enabled": bp.enabled,
        "hit_count": bp.hit_count,
    }


def _event_payload(kind: str, payload: dict) -> dict:
    out = dict(payload)
    if "location" in out:
        out["location"] = location_dict(out["location"])
    if "breakpoint" in out:
        out["breakpoint"] = breakpoint_dict(out["breakpoint"])
    return out


# -- session runtimes --------------------------------------------------------------


class SessionRuntime:
    """One session plus its worker thread, event hub and attached artifacts."""

    def __init__(self, sid: str, session: Session, source_root: Path | None = None,
                 owned_stub: StubServer | None = None,
                 catalog: boottrace.MilestoneCatalog | None = None):
        self.id = sid
        self.session = session
        self.source_root = source_root
        self.owned_stub = owned_stub
        self.catalog = catalog or boottrace.builtin_catalog("freebsd8-i386")
        self.hub = EventHub()
        self.last_trace: boottrace.BootTrace | None = None
        self._tasks: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run, name=f"session-{sid}", daemon=True)
        self._closed = False
        session.add_listener(lambda kind, payload: self.hub.publish(kind, _event_payload(kind, payload)))
        self._worker.start()

    def _run(self) -> None:
        while True:
            task = self._tasks.get()
            if task is _CLOSE:
                break
            fn, future = task
            if not future.set_running_or_notify_cancel():
                continue
            try:
                future.set_result(fn())
            except BaseException as exc:
                future.set_exception(exc)

    def submit(self, fn: Callable[[], Any]) -> Future:
        if self._closed:
            raise RuntimeError("session runtime is closed")
        future: Future = Future()
        self._tasks.put((fn, future))
        return future

    def call(self, fn: Callable[[], Any], timeout: float = 60.0) -> Any:
        return self.submit(fn).result(timeout=timeout)

    def state_dict(self) -> dict:
        s = self.session
        location = None
        if s.current_pc is not None:
            location = resolve_addr(s.symbols, s.lines, s.current_pc)
        return {
            "id": self.id,
            "phase": s.phase.value,
            "pc": s.current_pc,
            "location": location_dict(location),
            "breakpoints": [breakpoint_dict(bp) for bp in s.breakpoints.values()],
            "packet_limit": s.packet_limit,
            "event_seq": self.hub._seq,
        }

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.call(self.session.close, timeout=10)
        except Exception as exc:
            log.warning("session %s close failed: %s", self.id, exc)
        self._tasks.put(_CLOSE)
        self._worker.join(timeout=5)
        self.hub.close()
        if self.owned_stub is not None:
            self.owned_stub.stop()


class SessionManager:
    def __init__(self):
        self.sessions: dict[str, SessionRuntime] = {}
        self._ids = itertools.count(1)
        self.bench_summaries: list[perfmodel.BenchSummary] = []
        self.bench_samples: list[perfmodel.BenchSample] = []

    def adopt(self, session: Session, **kwargs) -> SessionRuntime:
        sid = f"s{next(self._ids)}"
        runtime = SessionRuntime(sid, session, **kwargs)
        self.sessions[sid] = runtime
        return runtime

    def get(self, sid: str) -> SessionRuntime:
        runtime = self.sessions.get(sid)
        if runtime is None:
            raise HTTPException(404, f"no session {sid!r}")
        return runtime

    def delete(self, sid: str) -> None:
        runtime = self.get(sid)
        del self.sessions[sid]
        runtime.close()

    def close_all(self) -> None:
        for sid in list(self.sessions):
            try:
                self.delete(sid)
            except Exception as exc:
                log.warning("closing %s: %s", sid, exc)


def load_tables(symbol_map: str | None, line_map: str | None,
                image: str | None) -> tuple[SymbolIndex, LineMap]:
    """Build the session lookup tables from artifact files."""
    if image:
        symbols = load_elf_symbols(Path(image).read_bytes())
    elif symbol_map:
        symbols = load_symbol_map(Path(symbol_map).read_text())
    else:
        symbols = SymbolIndex([])
    lines = load_line_map(Path(line_map).read_text()) if line_map else LineMap([])
    return symbols, lines


def open_session(host: str, port: int, symbols: SymbolIndex, lines: LineMap,
                 layout: RegisterLayout | None = None,
                 timeout: float = 5.0) -> Session:
    link = transport.connect(transport.LinkConfig(host=host, port=port, response_timeout=timeout))
    session = Session(link, symbols, lines, layout=layout)
    session.attach()
    return session


def build_demo(manager: SessionManager, z0_supported: bool = True) -> SessionRuntime:
    """Self-hosted fixture: mock stub + session + sources, one call."""
    stub = mocktarget.serve(mocktarget.build_boot_fixture(z0_supported=z0_supported))
    try:
        symbols = load_symbol_map(mocktarget.boot_fixture_symbol_map())
        lines = load_line_map(mocktarget.boot_fixture_line_map())
        source_root = Path(tempfile.mkdtemp(prefix="bootscope-demo-"))
        for name, text in mocktarget.boot_fixture_sources().items():
            path = source_root / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        session = open_session("127.0.0.1", stub.port, symbols, lines)
    except BaseException:
        stub.stop()
        raise
    manager.bench_summaries = perfmodel.bundled_summaries()
    return manager.adopt(session, source_root=source_root, owned_stub=stub)


# -- request bodies -----------------------------------------------------------------


class CreateSessionBody(BaseModel):
    host: str = "127.0.0.1"
    port: int = transport.DEFAULT_PORT
    image: str | None = None
    symbol_map: str | None = None
    line_map: str | None = None
    layout: str | None = None
    source_root: str | None = None
    timeout: float = 5.0


class BreakpointBody(BaseModel):
    symbol: str | None = None
    file: str | None = None
    line: int | None = None
    address: int | None = None


class PatchBreakpointBody(BaseModel):
    enabled: bool


class BootTraceBody(BaseModel):
    catalog: str | None = None  # builtin:<name> or inline catalog text
    budget: int = boottrace.DEFAULT_BUDGET


class BenchBody(BaseModel):
    samples_csv: str | None = None
    summaries_csv: str | None = None
    format: str = "text"
    population: bool = False


# -- app ----------------------------------------------------------------------------


def _guard(fn: Callable[[], Any]) -> Any:
    """Run a session command, mapping domain errors onto status codes."""
    try:
        return fn()
    except HTTPException:
        raise
    except SessionPhaseError as exc:
        raise HTTPException(409, str(exc)) from exc
    except (UnknownSymbol, UnknownLine) as exc:
        raise HTTPException(404, str(exc)) from exc
    except (ValueError, boottrace.CatalogError, perfmodel.PerfError) as exc:
        raise HTTPException(400, str(exc)) from exc
    except BootscopeError as exc:
        raise HTTPException(500, str(exc)) from exc


def _resolve_catalog(runtime: SessionRuntime, spec: str | None) -> boottrace.MilestoneCatalog:
    if spec is None:
        return runtime.catalog
    if spec.startswith("builtin:"):
        return boottrace.builtin_catalog(spec.split(":", 1)[1])
    return boottrace.load_catalog(spec)


def trace_dict(trace: boottrace.BootTrace) -> dict:
    return {
        "catalog": trace.catalog_name,
        "outcome": trace.outcome.value,
        "events": [
            {"seq": e.seq, "milestone": e.milestone_key, "pc": e.pc,
             "step_budget_used": e.step_budget_used}
            for e in trace.events
        ],
        "warnings": list(trace.warnings),
    }


def create_app(manager: SessionManager | None = None, ui_dir: str | None = None) -> FastAPI:
    manager = manager if manager is not None else SessionManager()
    app = FastAPI(title="bootscope", version=__version__)
    app.state.manager = manager
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__, "sessions": len(manager.sessions)}

    @app.get("/api/sessions")
    def list_sessions():
        return [runtime.state_dict() for runtime in manager.sessions.values()]

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        def work():
            symbols, lines = load_tables(body.symbol_map, body.line_map, body.image)
            layout = None
            if body.layout:
                layout = RegisterLayout.from_json(Path(body.layout).read_text())
            session = open_session(body.host, body.port, symbols, lines,
                                   layout=layout, timeout=body.timeout)
            source_root = Path(body.source_root) if body.source_root else None
            return manager.adopt(session, source_root=source_root)

        try:
            runtime = _guard(work)
        except OSError as exc:
            raise HTTPException(400, f"cannot load artifacts: {exc}") from exc
        return runtime.state_dict()

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        return manager.get(sid).state_dict()

    @app.delete("/api/sessions/{sid}")
    def delete_session(sid: str):
        _guard(lambda: manager.delete(sid))
        return {"deleted": sid}

    @app.get("/api/sessions/{sid}/breakpoints")
    def list_breakpoints(sid: str):
        runtime = manager.get(sid)
        return [breakpoint_dict(bp) for bp in runtime.session.breakpoints.values()]

    @app.post("/api/sessions/{sid}/breakpoints")
    def add_breakpoint(sid: str, body: BreakpointBody):
        runtime = manager.get(sid)
        bp = _guard(lambda: runtime.call(
            lambda: runtime.session.set_breakpoint(
                symbol=body.symbol, file=body.file, line=body.line, address=body.address)
        ))
        return breakpoint_dict(bp)

    @app.delete("/api/sessions/{sid}/breakpoints/{bp_id}")
    def remove_breakpoint(sid: str, bp_id: int):
        runtime = manager.get(sid)
        if bp_id not in runtime.session.breakpoints:
            raise HTTPException(404, f"no breakpoint {bp_id}")
        _guard(lambda: runtime.call(lambda: runtime.session.remove_breakpoint(bp_id)))
        return {"removed": bp_id}

    @app.patch("/api/sessions/{sid}/breakpoints/{bp_id}")
    def patch_breakpoint(sid: str, bp_id: int, body: PatchBreakpointBody):
        runtime = manager.get(sid)
        if bp_id not in runtime.session.breakpoints:
            raise HTTPException(404, f"no breakpoint {bp_id}")
        bp = _guard(lambda: runtime.call(
            lambda: runtime.session.enable_breakpoint(bp_id, enabled=body.enabled)))
        return breakpoint_dict(bp)

    @app.post("/api/sessions/{sid}/step")
    def step(sid: str):
        runtime = manager.get(sid)
        event = _guard(lambda: runtime.call(runtime.session.step))
        return {"pc": event.pc, "location": location_dict(event.location),
                "exited": event.exited}

    @app.post("/api/sessions/{sid}/continue")
    def continue_run(sid: str):
        runtime = manager.get(sid)
        event = _guard(lambda: runtime.call(runtime.session.continue_run))
        return {"pc": event.pc, "location": location_dict(event.location),
                "exited": event.exited}

    @app.get("/api/sessions/{sid}/registers")
    def registers(sid: str):
        runtime = manager.get(sid)
        regs = _guard(lambda: runtime.call(runtime.session.read_registers))
        return {"names": list(regs.layout.names), "values": regs.values,
                "pc_name": regs.layout.pc_name}

    @app.get("/api/sessions/{sid}/memory")
    def memory(sid: str, addr: str, len: str):
        runtime = manager.get(sid)
        try:
            address, length = int(addr, 0), int(len, 0)
        except ValueError as exc:
            raise HTTPException(400, f"bad addr/len: {exc}") from exc
        if length < 0 or length > 0x10000:
            raise HTTPException(400, "len must be 0..65536")
        data = _guard(lambda: runtime.call(lambda: runtime.session.read_memory(address, length)))
        return {"addr": address, "len": length, "hex": data.hex()}

    @app.get("/api/sessions/{sid}/source")
    def source(sid: str, file: str):
        runtime = manager.get(sid)
        if runtime.source_root is None:
            raise HTTPException(404, "session has no source root configured")
        root = runtime.source_root.resolve()
        path = (root / file).resolve()
        if not path.is_relative_to(root):
            raise HTTPException(400, "path escapes the source root")
        if not path.is_file():
            raise HTTPException(404, f"no source file {file!r}")
        session = runtime.session
        current_line = None
        if session.current_pc is not None:
            location = resolve_addr(session.symbols, session.lines, session.current_pc)
            if location.file == file:
                current_line = location.line
        breakpoints = []
        for bp in session.breakpoints.values():
            row = session.lines.lookup(bp.address)
            if row is not None and row.address == bp.address and row.file == file:
                breakpoints.append({**breakpoint_dict(bp), "line": row.line})
        return {
            "file": file,
            "lines": path.read_text().splitlines(),
            "current_line": current_line,
            "breakable_lines": session.lines.lines_for_file(file),
            "breakpoints": breakpoints,
        }

    @app.post("/api/sessions/{sid}/boot-trace")
    def run_boot_trace(sid: str, body: BootTraceBody):
        runtime = manager.get(sid)

        def work():
            catalog = _resolve_catalog(runtime, body.catalog)

            def progress(event, milestone):
                runtime.hub.publish("trace_progress", {
                    "seq_in_trace": event.seq,
                    "milestone": event.milestone_key,
                    "pc": event.pc,
                    "source": milestone.source_location,
                })

            trace = boottrace.trace_boot(runtime.session, catalog,
                                         budget=body.budget, progress=progress)
            runtime.last_trace = trace
            runtime.catalog = catalog
            return trace

        trace = _guard(lambda: runtime.call(work, timeout=120))
        return trace_dict(trace)

    @app.get("/api/sessions/{sid}/trace")
    def get_trace(sid: str):
        runtime = manager.get(sid)
        if runtime.last_trace is None:
            raise HTTPException(404, "no boot trace recorded yet")
        return trace_dict(runtime.last_trace)

    @app.get("/api/sessions/{sid}/flow")
    def get_flow(sid: str, format: str = "text"):
        runtime = manager.get(sid)
        if runtime.last_trace is None:
            raise HTTPException(404, "no boot trace recorded yet")
        document = _guard(lambda: boottrace.render_flow(runtime.last_trace, runtime.catalog, fmt=format))
        return {"format": format, "document": document}

    @app.get("/api/bench/tables")
    def bench_tables(format: str = "text"):
        summaries = list(manager.bench_summaries)
        if manager.bench_samples:
            summaries = perfmodel.summarize_all(manager.bench_samples) + summaries
        if not summaries:
            raise HTTPException(404, "no benchmark data configured")
        document = _guard(lambda: perfmodel.render_bench_tables(summaries, fmt=format))
        return {"format": format, "document": document}

    @app.post("/api/bench/tables")
    def bench_tables_adhoc(body: BenchBody):
        def work():
            summaries: list[perfmodel.BenchSummary] = []
            if body.samples_csv:
                samples = perfmodel.read_samples_csv(body.samples_csv)
                summaries.extend(perfmodel.summarize_all(samples, population=body.population))
            if body.summaries_csv:
                summaries.extend(perfmodel.read_summaries_csv(body.summaries_csv))
            if not summaries:
                raise ValueError("provide samples_csv and/or summaries_csv")
            return perfmodel.render_bench_tables(summaries, fmt=body.format)

        return {"format": body.format, "document": _guard(work)}

    @app.get("/api/sessions/{sid}/events")
    def events(sid: str, request: Request, after: int = -1, limit: int | None = None):
        """Server-sent events.  Resume with ?after= or Last-Event-ID.

        ``limit`` ends the stream after that many data events; without it
        the stream stays open (keepalive comments every half second).
        """
        runtime = manager.get(sid)
        if after >= 0:
            cursor = after
        else:
            try:
                cursor = int(request.headers.get("last-event-id", "0"))
            except ValueError:
                cursor = 0

        def stream():
            q, replay = runtime.hub.subscribe(cursor)
            sent = 0
            try:
                yield ": connected\n\n"
                for event in replay:
                    yield event.sse()
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
                while True:
                    try:
                        event = q.get(timeout=0.5)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if event is _CLOSE:
                        break
                    yield event.sse()
                    sent += 1
                    if limit is not None and sent >= limit:
                        return
            finally:
                runtime.hub.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
