from __future__ import annotations

import re

import pytest

from bootscope import boottrace, mocktarget
from bootscope.boottrace import (
    BootTrace,
    DuplicateKey,
    EmptyCatalog,
    MilestoneCatalog,
    TraceEvent,
    TraceOutcome,
    builtin_catalog,
    load_catalog,
    render_flow,
    trace_boot,
)
from bootscope.mocktarget import FIXTURE_MILESTONES, TargetScript, build_boot_fixture

from conftest import make_session

CANONICAL_ORDER = ["boot0", "boot2", "loader", "init386"]

MINI_CATALOG = """\
catalog: mini
milestone: a
location: 0x7010
milestone: b
location: 0x7e10
"""


def check_dot_syntax(text: str) -> tuple[int, int]:
    """Minimal dot checker: structure, balanced braces; returns (nodes, edges)."""
    lines = text.strip().splitlines()
    assert lines[0].startswith("digraph ") and lines[0].endswith("{")
    assert lines[-1] == "}"
    assert text.count("{") == text.count("}") == 1
    nodes = re.findall(r"^\s*(n\d+) \[label=\"[^\"]*\"\];$", text, re.M)
    edges = re.findall(r"^\s*(n\d+) -> (n\d+);$", text, re.M)
    for a, b in edges:
        assert a in nodes and b in nodes
    return len(nodes), len(edges)


class TestLoadCatalog:
    def test_builtin_freebsd_order(self):
        catalog = builtin_catalog("freebsd8-i386")
        assert catalog.name == "freebsd8-i386"
        assert catalog.keys() == CANONICAL_ORDER
        boot0 = catalog.milestones[0]
        assert boot0.source_location == "sys/boot/i386/boot0/boot0.S"
        assert any("0x7c00" in note for note in boot0.notes)
        assert any("0x1be" in note for note in boot0.notes)

    def test_builtin_linux(self):
        catalog = builtin_catalog("linux-x86")
        assert catalog.keys() == ["sched_init"]

    def test_unknown_builtin(self):
        with pytest.raises(boottrace.CatalogError):
            builtin_catalog("plan9")

    def test_duplicate_key(self):
        text = MINI_CATALOG + "milestone: a\nlocation: 0x1\n"
        with pytest.raises(DuplicateKey):
            load_catalog(text)

    def test_missing_location(self):
        with pytest.raises(boottrace.ParseError):
            load_catalog("catalog: x\nmilestone: a\nnote: hm\n")

    def test_missing_catalog_line(self):
        with pytest.raises(boottrace.ParseError):
            load_catalog("milestone: a\nlocation: 0x1\n")

    def test_unknown_key_reports_line(self):
        with pytest.raises(boottrace.ParseError) as exc:
            load_catalog("catalog: x\nmilestone: a\nlocation: 0x1\nbogus: v\n")
        assert exc.value.line_no == 4

    def test_comments_and_blanks_ignored(self):
        catalog = load_catalog("# hi\n\ncatalog: x\n\nmilestone: a\nlocation: sym\n")
        assert catalog.keys() == ["a"]
        assert catalog.milestones[0].address_literal() is None

    def test_address_literal(self):
        catalog = load_catalog(MINI_CATALOG)
        assert catalog.milestones[0].address_literal() == 0x7010


class TestTraceBoot:
    @pytest.mark.parametrize("z0", [True, False])
    def test_canonical_flow(self, z0):
        server = mocktarget.serve(build_boot_fixture(z0_supported=z0))
        try:
            s = make_session(server)
            trace = trace_boot(s, builtin_catalog("freebsd8-i386"))
            assert trace.keys() == CANONICAL_ORDER
            assert trace.outcome is TraceOutcome.COMPLETED
            assert [e.seq for e in trace.events] == [1, 2, 3, 4]
            s.close()
        finally:
            server.stop()

    def test_trace_order_matches_script_scan(self, boot_stub):
        # Brute-force oracle: scan the script's trace directly.
        s = make_session(boot_stub)
        script = build_boot_fixture()
        catalog = builtin_catalog("freebsd8-i386")
        addr_to_key = {v: k for k, v in FIXTURE_MILESTONES.items()}
        expected, seen = [], set()
        for pc in script.trace:
            key = addr_to_key.get(pc)
            if key is not None and key not in seen:
                seen.add(key)
                expected.append(key)
        trace = trace_boot(s, catalog)
        assert trace.keys() == expected
        s.close()

    def test_memory_restored_after_trace(self, boot_stub_no_z0):
        s = make_session(boot_stub_no_z0)
        script = build_boot_fixture()
        trace = trace_boot(s, builtin_catalog("freebsd8-i386"))
        assert trace.outcome is TraceOutcome.COMPLETED
        readback = s.read_memory(script.memory_base, len(script.memory))
        assert readback == script.memory
        s.close()

    def test_early_exit(self):
        # Truncate the script right after boot2: loader is never reached.
        full = build_boot_fixture()
        cut = full.trace.index(FIXTURE_MILESTONES["boot2"]) + 2
        script = TargetScript(
            memory_base=full.memory_base, memory=full.memory, entry_pc=full.entry_pc,
            trace=full.trace[:cut], registers=full.registers,
        )
        server = mocktarget.serve(script)
        try:
            s = make_session(server)
            trace = trace_boot(s, builtin_catalog("freebsd8-i386"))
            assert trace.keys() == ["boot0", "boot2"]
            assert trace.outcome is TraceOutcome.TARGET_EXITED_EARLY
            s.close()
        finally:
            server.stop()

    def test_budget_exhausted(self, boot_stub):
        s = make_session(boot_stub)
        trace = trace_boot(s, builtin_catalog("freebsd8-i386"), budget=1)
        assert len(trace.events) == 1
        assert trace.events[0].milestone_key == "boot0"
        assert trace.events[0].step_budget_used == 1
        assert trace.outcome is TraceOutcome.BUDGET_EXHAUSTED
        s.close()

    def test_empty_catalog(self, boot_session):
        with pytest.raises(EmptyCatalog):
            trace_boot(boot_session, MilestoneCatalog(name="x", milestones=()))

    def test_unresolvable_milestone_skipped_with_warning(self, boot_stub):
        s = make_session(boot_stub)
        catalog = load_catalog(
            "catalog: x\n"
            "milestone: ghost\nlocation: not_a_symbol\n"
            "milestone: boot2\nlocation: boot2\n"
        )
        trace = trace_boot(s, catalog)
        assert trace.keys() == ["boot2"]
        assert any("ghost" in w for w in trace.warnings)
        s.close()

    def test_initial_pc_counts_as_hit(self, boot_stub):
        s = make_session(boot_stub)
        catalog = load_catalog(
            "catalog: x\nmilestone: entry\nlocation: reset_vector\n"
            "milestone: boot0\nlocation: boot0\n"
        )
        trace = trace_boot(s, catalog)
        assert trace.keys() == ["entry", "boot0"]
        assert trace.events[0].step_budget_used == 0
        s.close()

    def test_out_of_order_hit_is_flagged(self, boot_stub):
        s = make_session(boot_stub)
        # Catalog order deliberately reversed relative to the script.
        catalog = load_catalog(
            "catalog: x\nmilestone: late\nlocation: loader\n"
            "milestone: early\nlocation: boot2\n"
        )
        trace = trace_boot(s, catalog)
        assert trace.keys() == ["early", "late"]
        assert any("out of catalog order" in w for w in trace.warnings)
        s.close()

    def test_progress_callback(self, boot_stub):
        s = make_session(boot_stub)
        calls = []
        trace_boot(s, builtin_catalog("freebsd8-i386"),
                   progress=lambda event, milestone: calls.append(event.milestone_key))
        assert calls == CANONICAL_ORDER
        s.close()

    def test_preexisting_breakpoint_survives(self, boot_stub):
        s = make_session(boot_stub)
        mine = s.set_breakpoint(symbol="boot2")
        trace_boot(s, builtin_catalog("freebsd8-i386"))
        assert mine.id in s.breakpoints
        assert len(s.breakpoints) == 1
        s.close()


class TestRenderFlow:
    def make_trace(self):
        events = [
            TraceEvent(seq=i + 1, milestone_key=key, pc=FIXTURE_MILESTONES[key], step_budget_used=i + 1)
            for i, key in enumerate(CANONICAL_ORDER)
        ]
        return BootTrace(catalog_name="freebsd8-i386", events=events)

    def test_text_contains_arrow_chain(self):
        text = render_flow(self.make_trace(), builtin_catalog("freebsd8-i386"))
        assert "boot0 → boot2 → loader → init386" in text
        assert "sys/boot/i386/boot0/boot0.S" in text
        assert "sets up proc0's pcb" in text

    def test_empty_trace_text(self):
        text = render_flow(BootTrace(catalog_name="x"), builtin_catalog("freebsd8-i386"))
        assert "no milestones were hit" in text

    def test_dot_counts(self):
        dot = render_flow(self.make_trace(), builtin_catalog("freebsd8-i386"), fmt="dot")
        nodes, edges = check_dot_syntax(dot)
        assert (nodes, edges) == (4, 3)

    def test_dot_empty(self):
        dot = render_flow(BootTrace(catalog_name="x"), builtin_catalog("freebsd8-i386"), fmt="dot")
        nodes, edges = check_dot_syntax(dot)
        assert (nodes, edges) == (0, 0)

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_flow(self.make_trace(), builtin_catalog("freebsd8-i386"), fmt="svg")
