import { Window } from "happy-dom";

import type { AppElements } from "../src/app.js";
import type { BreakpointInfo, SessionState, SourceDoc } from "../src/api.js";

export function dom(): { window: Window; document: Document } {
  const window = new Window();
  return { window, document: window.document as unknown as Document };
}

export function element(document: Document): HTMLElement {
  return document.createElement("div") as unknown as HTMLElement;
}

export function appElements(document: Document): AppElements {
  return {
    controls: element(document),
    source: element(document),
    registers: element(document),
    memory: element(document),
    flow: element(document),
    bench: element(document),
  };
}

export function fakeBreakpoint(overrides: Partial<BreakpointInfo> = {}): BreakpointInfo {
  return {
    id: 1,
    address: 0x7c00,
    origin: { kind: "line", file: "boot/boot0.S", line: 12 },
    mechanism: "stub_z0",
    enabled: true,
    hit_count: 0,
    ...overrides,
  };
}

export function fakeSessionState(overrides: Partial<SessionState> = {}): SessionState {
  return {
    id: "s1",
    phase: "stopped",
    pc: 0x7000,
    location: {
      address: 0x7000,
      symbol: "reset_vector",
      offset: 0,
      file: "boot/reset.S",
      line: 5,
      display: "0x00007000 reset_vector boot/reset.S:5",
    },
    breakpoints: [],
    packet_limit: 4096,
    event_seq: 0,
    ...overrides,
  };
}

export function fakeSourceDoc(overrides: Partial<SourceDoc> = {}): SourceDoc {
  return {
    file: "boot/reset.S",
    lines: ["; one", "; two", "; three", "; four", "        jmp boot_entry", "        hlt"],
    current_line: 5,
    breakable_lines: [5, 6],
    breakpoints: [],
    ...overrides,
  };
}
