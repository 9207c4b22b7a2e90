"""Boot milestone tracing: drive a session over a catalog, record the flow.

A milestone catalog is a line-oriented text file::

    # comment
    catalog: freebsd8-i386

    milestone: boot0
    location: boot0                      # symbol name, or 0x-prefixed address
    source: sys/boot/i386/boot0/boot0.S
    note: INT 0x19 loads the MBR into memory at address 0x7c00

    milestone: boot2
    ...

``catalog:`` names the catalog and must come first; each ``milestone:``
opens a block whose ``location:`` is required, with optional ``source:`` and
repeatable ``note:`` lines.  Block order is the expected boot order.

Two catalogs ship built in: ``freebsd8-i386`` (boot0, boot2, loader,
init386) and ``linux-x86`` (sched_init).
"""

from __future__ import annotations

import importlib.resources
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .errors import BootscopeError
from .session import Session, SessionPhase, SessionPhaseError
from .symbolics import UnknownSymbol, resolve_symbol

log = logging.getLogger(__name__)

BUILTIN_CATALOGS = ("freebsd8-i386", "linux-x86")
DEFAULT_BUDGET = 10_000


class CatalogError(BootscopeError):
    pass


class ParseError(CatalogError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateKey(CatalogError):
    pass


class EmptyCatalog(CatalogError):
    pass


@dataclass(frozen=True)
class Milestone:
    key: str
    location: str
    source_location: str = ""
    notes: tuple[str, ...] = ()

    def address_literal(self) -> int | None:
        if self.location.lower().startswith("0x"):
            return int(self.location, 16)
        return None


@dataclass(frozen=True)
class MilestoneCatalog:
    name: str
    milestones: tuple[Milestone, ...]

    def keys(self) -> list[str]:
        return [m.key for m in self.milestones]


class TraceOutcome(Enum):
    COMPLETED = "completed"
    TARGET_EXITED_EARLY = "target_exited_early"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    milestone_key: str
    pc: int
    step_budget_used: int


@dataclass
class BootTrace:
    catalog_name: str
    events: list[TraceEvent] = field(default_factory=list)
    outcome: TraceOutcome = TraceOutcome.COMPLETED
    warnings: list[str] = field(default_factory=list)

    def keys(self) -> list[str]:
        return [e.milestone_key for e in self.events]


def load_catalog(text: str) -> MilestoneCatalog:
    """Parse the catalog format described in the module docstring."""
    name: str | None = None
    milestones: list[Milestone] = []
    seen_keys: set[str] = set()

    current_key: str | None = None
    current_started_at = 0
    location: str | None = None
    source = ""
    notes: list[str] = []

    def close_block():
        nonlocal current_key, location, source, notes
        if current_key is None:
            return
        if location is None:
            raise ParseError(current_started_at, f"milestone {current_key!r} has no location:")
        milestones.append(
            Milestone(key=current_key, location=location,
                      source_location=source, notes=tuple(notes))
        )
        current_key, location, source, notes = None, None, "", []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError(line_no, f"expected 'key: value', got {raw!r}")
        key, _, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not value:
            raise ParseError(line_no, f"empty value for {key!r}")
        if key == "catalog":
            if name is not None:
                raise ParseError(line_no, "catalog: given twice")
            name = value
        elif key == "milestone":
            if name is None:
                raise ParseError(line_no, "catalog: must come before the first milestone")
            close_block()
            if value in seen_keys:
                raise DuplicateKey(f"milestone key {value!r} repeats (line {line_no})")
            seen_keys.add(value)
            current_key = value
            current_started_at = line_no
        elif key in ("location", "source", "note"):
            if current_key is None:
                raise ParseError(line_no, f"{key}: outside a milestone block")
            if key == "location":
                if location is not None:
                    raise ParseError(line_no, "location: given twice in one milestone")
                location = value
            elif key == "source":
                source = value
            else:
                notes.append(value)
        else:
            raise ParseError(line_no, f"unknown key {key!r}")
    close_block()

    if name is None:
        raise ParseError(0, "catalog: line missing")
    return MilestoneCatalog(name=name, milestones=tuple(milestones))


def builtin_catalog(name: str) -> MilestoneCatalog:
    if name not in BUILTIN_CATALOGS:
        raise CatalogError(f"no built-in catalog {name!r}; have {', '.join(BUILTIN_CATALOGS)}")
    text = importlib.resources.files("bootscope").joinpath("data", f"{name}.catalog").read_text()
    return load_catalog(text)


def trace_boot(
    session: Session,
    catalog: MilestoneCatalog,
    budget: int = DEFAULT_BUDGET,
    progress: Callable[[TraceEvent, Milestone], None] | None = None,
) -> BootTrace:
    """Breakpoint every milestone, run, and record the order they are hit.

    ``budget`` caps run-control operations so a trace over a looping target
    always terminates.  Breakpoints planted here are removed afterwards,
    restoring any patched bytes; breakpoints the caller had already placed
    on milestone addresses are left alone.
    """
    if not catalog.milestones:
        raise EmptyCatalog(f"catalog {catalog.name!r} has no milestones")
    if session.phase is not SessionPhase.STOPPED:
        raise SessionPhaseError(f"trace requires a stopped target (phase: {session.phase.value})")
    if budget < 1:
        raise ValueError("budget must be at least 1")

    trace = BootTrace(catalog_name=catalog.name)
    by_addr: dict[int, Milestone] = {}
    catalog_order: dict[str, int] = {}
    for index, milestone in enumerate(catalog.milestones):
        addr = milestone.address_literal()
        if addr is None:
            try:
                addr = resolve_symbol(session.symbols, milestone.location)
            except UnknownSymbol:
                message = f"milestone {milestone.key!r}: symbol {milestone.location!r} not found; skipped"
                log.warning("%s", message)
                trace.warnings.append(message)
                continue
        by_addr[addr] = milestone
        catalog_order[milestone.key] = index

    preexisting = set(session.breakpoints)
    planted: list[int] = []
    for addr in by_addr:
        bp = session.set_breakpoint(address=addr)
        if bp.id not in preexisting:
            planted.append(bp.id)

    recorded: set[str] = set()
    ops_used = 0
    max_index_seen = -1

    def record(pc: int) -> None:
        nonlocal max_index_seen
        milestone = by_addr.get(pc)
        if milestone is None or milestone.key in recorded:
            return
        recorded.add(milestone.key)
        event = TraceEvent(
            seq=len(trace.events) + 1,
            milestone_key=milestone.key,
            pc=pc,
            step_budget_used=ops_used,
        )
        trace.events.append(event)
        index = catalog_order[milestone.key]
        if index < max_index_seen:
            trace.warnings.append(f"milestone {milestone.key!r} hit out of catalog order")
        max_index_seen = max(max_index_seen, index)
        if progress is not None:
            progress(event, milestone)

    if session.current_pc is not None:
        record(session.current_pc)

    try:
        while len(recorded) < len(by_addr):
            if ops_used >= budget:
                trace.outcome = TraceOutcome.BUDGET_EXHAUSTED
                break
            event = session.continue_run()
            ops_used += 1
            if event.exited:
                trace.outcome = TraceOutcome.TARGET_EXITED_EARLY
                break
            assert event.pc is not None
            record(event.pc)
        else:
            trace.outcome = TraceOutcome.COMPLETED
    finally:
        if session.phase is SessionPhase.STOPPED:
            for bp_id in planted:
                session.remove_breakpoint(bp_id)
    return trace


def render_flow(trace: BootTrace, catalog: MilestoneCatalog, fmt: str = "text") -> str:
    """Render a recorded trace as a human report or a dot graph."""
    if fmt == "text":
        return _render_text(trace, catalog)
    if fmt == "dot":
        return _render_dot(trace)
    raise ValueError(f"unknown format {fmt!r}; use 'text' or 'dot'")


def _render_text(trace: BootTrace, catalog: MilestoneCatalog) -> str:
    details = {m.key: m for m in catalog.milestones}
    lines = [
        f"boot control flow: {trace.catalog_name}",
        f"outcome: {trace.outcome.value}",
        "",
    ]
    if not trace.events:
        lines.append("no milestones were hit")
    else:
        lines.append(" → ".join(trace.keys()))
        lines.append("")
        for event in trace.events:
            lines.append(
                f"[{event.seq}] {event.milestone_key}  pc={event.pc:#x}"
                f"  (run ops used: {event.step_budget_used})"
            )
            milestone = details.get(event.milestone_key)
            if milestone is not None:
                if milestone.source_location:
                    lines.append(f"    source: {milestone.source_location}")
                for note in milestone.notes:
                    lines.append(f"    - {note}")
    if trace.warnings:
        lines.append("")
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in trace.warnings)
    return "\n".join(lines) + "\n"


def _render_dot(trace: BootTrace) -> str:
    lines = ["digraph bootflow {", "  rankdir=LR;"]
    for i, event in enumerate(trace.events):
        label = f"{event.milestone_key}\\n{event.pc:#x}"
        lines.append(f'  n{i} [label="{label}"];')
    for i in range(len(trace.events) - 1):
        lines.append(f"  n{i} -> n{i + 1};")
    lines.append("}")
    return "\n".join(lines) + "\n"
