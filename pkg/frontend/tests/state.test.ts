import { describe, expect, it } from "vitest";

import { applyEvent, breakpointOnLine, initialViewState, reconcile } from "../src/state.js";
import { fakeBreakpoint, fakeSessionState } from "./helpers.js";

function stoppedState() {
  return reconcile(initialViewState(), fakeSessionState());
}

describe("reconcile", () => {
  it("mirrors the server snapshot", () => {
    const state = stoppedState();
    expect(state.sessionId).toBe("s1");
    expect(state.phase).toBe("stopped");
    expect(state.openFile).toBe("boot/reset.S");
    expect(state.currentLine).toBe(5);
    expect(state.cursor).toBe(0);
    expect(state.controlsBusy).toBe(false);
  });

  it("reconciliation after divergence equals server state", () => {
    let state = stoppedState();
    state = { ...state, phase: "running", currentLine: 99, lostEvents: true, cursor: 3 };
    const server = fakeSessionState({ event_seq: 17, breakpoints: [fakeBreakpoint()] });
    state = reconcile(state, server);
    expect(state.phase).toBe(server.phase);
    expect(state.currentLine).toBe(server.location!.line);
    expect(state.breakpoints).toEqual(server.breakpoints);
    expect(state.cursor).toBe(17);
    expect(state.lostEvents).toBe(false);
  });
});

describe("applyEvent", () => {
  it("running disables controls and mirrors phase", () => {
    const state = applyEvent(stoppedState(), { seq: 1, kind: "running" });
    expect(state.phase).toBe("running");
    expect(state.controlsBusy).toBe(true);
  });

  it("stopped updates the highlight from the event location", () => {
    let state = applyEvent(stoppedState(), { seq: 1, kind: "running" });
    state = applyEvent(state, {
      seq: 2,
      kind: "stopped",
      pc: 0x7010,
      location: { address: 0x7010, symbol: "reset_vector", offset: 16, file: "boot/reset.S", line: 6, display: "x" },
    });
    expect(state.phase).toBe("stopped");
    expect(state.currentLine).toBe(6);
    expect(state.controlsBusy).toBe(false);
    expect(state.cursor).toBe(2);
  });

  it("exited clears the highlight", () => {
    const state = applyEvent(stoppedState(), { seq: 1, kind: "exited", exit_code: 0 });
    expect(state.phase).toBe("exited");
    expect(state.currentLine).toBeNull();
  });

  it("view phase always equals the last event's phase", () => {
    let state = stoppedState();
    const phases: string[] = [];
    for (const event of [
      { seq: 1, kind: "running" },
      { seq: 2, kind: "stopped", pc: 1, location: null },
      { seq: 3, kind: "running" },
      { seq: 4, kind: "exited" },
    ]) {
      state = applyEvent(state, event);
      phases.push(state.phase);
    }
    expect(phases).toEqual(["running", "stopped", "running", "exited"]);
  });

  it("breakpoint lifecycle: added, hit, removed", () => {
    const bp = fakeBreakpoint();
    let state = applyEvent(stoppedState(), {
      seq: 1, kind: "breakpoint_changed", action: "added", breakpoint: bp,
    });
    expect(state.breakpoints).toHaveLength(1);
    state = applyEvent(state, {
      seq: 2, kind: "breakpoint_changed", action: "hit", breakpoint: { ...bp, hit_count: 1 },
    });
    expect(state.breakpoints[0]!.hit_count).toBe(1);
    state = applyEvent(state, {
      seq: 3, kind: "breakpoint_changed", action: "removed", breakpoint: bp,
    });
    expect(state.breakpoints).toHaveLength(0);
  });

  it("trace progress accumulates milestone keys in order", () => {
    let state = stoppedState();
    for (const [index, key] of ["boot0", "boot2"].entries()) {
      state = applyEvent(state, { seq: index + 1, kind: "trace_progress", milestone: key });
    }
    expect(state.traceMilestones).toEqual(["boot0", "boot2"]);
  });

  it("detects sequence gaps for reconciliation", () => {
    let state = applyEvent(stoppedState(), { seq: 1, kind: "running" });
    state = applyEvent(state, { seq: 5, kind: "running" });
    expect(state.lostEvents).toBe(true);
  });

  it("ignores replayed events at or below the cursor", () => {
    let state = applyEvent(stoppedState(), { seq: 1, kind: "running" });
    const replayed = applyEvent(state, { seq: 1, kind: "exited" });
    expect(replayed).toBe(state);
  });
});

describe("breakpointOnLine", () => {
  it("matches server-decorated rows and live line-origin breakpoints", () => {
    const bp = fakeBreakpoint({ id: 2, origin: { kind: "symbol", symbol: "boot0" } });
    const state = { ...stoppedState(), breakpoints: [bp, fakeBreakpoint({ id: 3 })] };
    const decorated = [{ ...bp, line: 12 }];
    expect(breakpointOnLine(state, decorated, "boot/boot0.S", 12)?.id).toBe(2);
    expect(breakpointOnLine(state, [], "boot/boot0.S", 12)?.id).toBe(3);
    expect(breakpointOnLine(state, [], "boot/boot0.S", 13)).toBeUndefined();
  });
});
