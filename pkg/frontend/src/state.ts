// View state lives apart from the DOM: server events (and reconciliation
// snapshots) are the only things that may change it.  Optimistic updates
// are deliberately impossible — command handlers never touch the store.

import type { ApiEventMsg, BreakpointInfo, LocationInfo, SessionState } from "./api.js";

export interface ViewState {
  sessionId: string | null;
  phase: string;
  pc: number | null;
  location: LocationInfo | null;
  openFile: string | null;
  currentLine: number | null;
  breakpoints: BreakpointInfo[];
  cursor: number; // last applied event sequence number
  lostEvents: boolean; // a gap was detected; reconcile with get-state
  controlsBusy: boolean; // command sent, next event not yet seen
  notice: string | null;
  traceMilestones: string[]; // trace_progress keys, in arrival order
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    phase: "disconnected",
    pc: null,
    location: null,
    openFile: null,
    currentLine: null,
    breakpoints: [],
    cursor: 0,
    lostEvents: false,
    controlsBusy: false,
    notice: null,
    traceMilestones: [],
  };
}

/** Adopt the server's authoritative snapshot (connect and reconnect path). */
export function reconcile(state: ViewState, server: SessionState): ViewState {
  const location = server.location;
  return {
    ...state,
    sessionId: server.id,
    phase: server.phase,
    pc: server.pc,
    location,
    openFile: location?.file ?? state.openFile,
    currentLine: location?.file ? location.line : null,
    breakpoints: [...server.breakpoints],
    cursor: server.event_seq,
    lostEvents: false,
    controlsBusy: false,
  };
}

function upsertBreakpoint(list: BreakpointInfo[], bp: BreakpointInfo): BreakpointInfo[] {
  const index = list.findIndex((existing) => existing.id === bp.id);
  if (index < 0) return [...list, bp];
  const next = [...list];
  next[index] = bp;
  return next;
}

/** Pure reducer: fold one server event into the view state. */
export function applyEvent(state: ViewState, event: ApiEventMsg): ViewState {
  let next: ViewState = { ...state };
  if (event.seq <= state.cursor) {
    return state; // replay of something already applied
  }
  if (state.cursor > 0 && event.seq !== state.cursor + 1) {
    next.lostEvents = true; // gap: caller must reconcile via get-state
  }
  next.cursor = event.seq;

  switch (event.kind) {
    case "running":
      next.phase = "running";
      next.controlsBusy = true;
      break;
    case "stopped": {
      next.phase = "stopped";
      next.controlsBusy = false;
      next.pc = (event.pc as number | null) ?? null;
      const location = (event.location as LocationInfo | null) ?? null;
      next.location = location;
      if (location?.file) {
        next.openFile = location.file;
        next.currentLine = location.line;
      } else {
        next.currentLine = null;
      }
      break;
    }
    case "exited":
      next.phase = "exited";
      next.controlsBusy = false;
      next.pc = null;
      next.currentLine = null;
      break;
    case "breakpoint_changed": {
      const bp = event.breakpoint as BreakpointInfo | undefined;
      if (bp === undefined) break;
      if (event.action === "removed") {
        next.breakpoints = state.breakpoints.filter((existing) => existing.id !== bp.id);
      } else {
        next.breakpoints = upsertBreakpoint(state.breakpoints, bp);
      }
      break;
    }
    case "trace_progress":
      next.traceMilestones = [...state.traceMilestones, String(event.milestone)];
      break;
    case "log":
      break;
    default:
      break; // forward compatible: unknown kinds leave the state alone
  }
  return next;
}

/** Breakpoint shown in the gutter for a given file line, if any. */
export function breakpointOnLine(
  state: ViewState,
  docBreakpoints: (BreakpointInfo & { line: number })[],
  file: string,
  line: number,
): BreakpointInfo | undefined {
  const live = new Map(state.breakpoints.map((bp) => [bp.id, bp]));
  // Server-decorated rows first (they know the address->line mapping)...
  for (const decorated of docBreakpoints) {
    const current = live.get(decorated.id);
    if (current !== undefined && decorated.line === line) return current;
  }
  // ...then line-origin breakpoints created after the doc was fetched.
  return state.breakpoints.find(
    (bp) => bp.origin.kind === "line" && bp.origin.file === file && bp.origin.line === line,
  );
}
