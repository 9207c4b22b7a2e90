// The app controller: owns the ViewState, the event subscription and all
// rendering.  Server events are the single source of truth — command
// handlers only issue API calls and surface errors; state changes render
// when the corresponding event arrives.

import { ApiClient, ApiError } from "./api.js";
import type { ApiEventMsg, RegistersDoc, SourceDoc, TraceDoc } from "./api.js";
import { renderControls } from "./controls.js";
import { renderBenchTables, renderFlow, renderMemory, renderRegisters } from "./panels.js";
import { renderSource, renderSourceError } from "./sourcePane.js";
import { applyEvent, breakpointOnLine, initialViewState, reconcile, type ViewState } from "./state.js";

export interface AppElements {
  controls: HTMLElement;
  source: HTMLElement;
  registers: HTMLElement;
  memory: HTMLElement;
  flow: HTMLElement;
  bench: HTMLElement;
}

const RECONNECT_DELAY_MS = 1000;

export class DebuggerApp {
  state: ViewState = initialViewState();
  sourceDoc: SourceDoc | null = null;
  sourceError: string | null = null;
  registers: RegistersDoc | null = null;
  trace: TraceDoc | null = null;
  benchMarkdown: string | null = null;
  memoryView: { addr: number; hex: string } | null = null;

  private alive = false;
  private abort: AbortController | null = null;
  private streamDone: Promise<void> = Promise.resolve();

  constructor(
    readonly client: ApiClient,
    readonly elements: AppElements,
  ) {}

  /** Attach to the first server session and start following its events. */
  async start(): Promise<void> {
    this.alive = true;
    const sessions = await this.client.listSessions();
    const first = sessions[0];
    if (first === undefined) {
      this.state = { ...this.state, notice: "no session on the server yet" };
      this.render();
      return;
    }
    this.state = reconcile(this.state, first);
    await this.refreshAfterStop();
    this.benchMarkdown = await this.client
      .getBenchTables("markdown")
      .then((body) => body.document)
      .catch(() => null);
    this.trace = await this.client.getTrace(first.id).catch(() => null);
    this.render();
    this.streamDone = this.followEvents();
  }

  async stop(): Promise<void> {
    this.alive = false;
    this.abort?.abort();
    await this.streamDone.catch(() => undefined);
  }

  /** Ask the server for the authoritative state (connect/reconnect/gap). */
  async reconcileNow(): Promise<void> {
    if (this.state.sessionId === null) return;
    const server = await this.client.getState(this.state.sessionId);
    this.state = reconcile(this.state, server);
    await this.refreshAfterStop();
    this.render();
  }

  private async followEvents(): Promise<void> {
    while (this.alive && this.state.sessionId !== null) {
      this.abort = new AbortController();
      try {
        for await (const event of this.client.events(
          this.state.sessionId,
          this.state.cursor,
          this.abort.signal,
        )) {
          await this.dispatch(event);
          if (!this.alive) return;
        }
      } catch {
        // stream failed; fall through to reconnect
      }
      if (!this.alive) return;
      await new Promise((resolve) => setTimeout(resolve, RECONNECT_DELAY_MS));
      if (!this.alive) return;
      try {
        await this.reconcileNow(); // resume from a fresh snapshot
      } catch {
        // server unreachable; keep retrying
      }
    }
  }

  async dispatch(event: ApiEventMsg): Promise<void> {
    const before = this.state;
    this.state = applyEvent(this.state, event);
    if (this.state.lostEvents) {
      await this.reconcileNow();
      return;
    }
    // Event payloads are authoritative: reflect them in the DOM at once,
    // then refresh the slower panels and render again.
    this.render();
    if (event.kind === "stopped") {
      const fileChanged = this.state.openFile !== before.openFile || this.sourceDoc === null;
      await this.refreshAfterStop(fileChanged);
      this.render();
    } else if (event.kind === "exited" && this.state.sessionId !== null) {
      this.trace = await this.client.getTrace(this.state.sessionId).catch(() => this.trace);
      this.render();
    }
  }

  private async refreshAfterStop(reloadSource = true): Promise<void> {
    if (this.state.sessionId === null) return;
    if (this.state.phase === "stopped") {
      this.registers = await this.client.getRegisters(this.state.sessionId).catch(() => null);
      if ((reloadSource || this.sourceDoc === null) && this.state.openFile !== null) {
        await this.openFile(this.state.openFile);
      }
    }
  }

  async openFile(file: string): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      this.sourceDoc = await this.client.getSource(this.state.sessionId, file);
      this.sourceError = null;
    } catch (error) {
      this.sourceDoc = null;
      this.sourceError = error instanceof ApiError ? error.message : String(error);
    }
  }

  private async command(run: () => Promise<unknown>): Promise<void> {
    if (this.state.sessionId === null) return;
    // Guard against double-clicks until the next server event re-enables.
    this.state = { ...this.state, controlsBusy: true, notice: null };
    this.render();
    try {
      await run();
    } catch (error) {
      const message =
        error instanceof ApiError && error.status === 409
          ? `not now: ${error.message}`
          : `command failed: ${error instanceof Error ? error.message : String(error)}`;
      this.state = { ...this.state, controlsBusy: false, notice: message };
      this.render();
    }
  }

  handleStep(): Promise<void> {
    return this.command(() => this.client.step(this.state.sessionId!));
  }

  handleContinue(): Promise<void> {
    return this.command(() => this.client.continueRun(this.state.sessionId!));
  }

  async handleRunBootTrace(): Promise<void> {
    await this.command(async () => {
      const trace = await this.client.runBootTrace(this.state.sessionId!);
      this.trace = trace;
    });
    this.render();
  }

  /** Gutter click: toggle the breakpoint on that line (server round trip). */
  async handleGutterClick(line: number): Promise<void> {
    if (this.state.sessionId === null || this.sourceDoc === null) return;
    const file = this.sourceDoc.file;
    const existing = breakpointOnLine(this.state, this.sourceDoc.breakpoints, file, line);
    try {
      if (existing === undefined) {
        await this.client.addBreakpoint(this.state.sessionId, { file, line });
      } else {
        await this.client.removeBreakpoint(this.state.sessionId, existing.id);
      }
    } catch (error) {
      this.state = {
        ...this.state,
        notice: `breakpoint: ${error instanceof Error ? error.message : String(error)}`,
      };
      this.render();
    }
  }

  async handleReadMemory(addr: number, len: number): Promise<void> {
    if (this.state.sessionId === null) return;
    try {
      const body = await this.client.readMemory(this.state.sessionId, addr, len);
      this.memoryView = { addr: body.addr, hex: body.hex };
    } catch (error) {
      this.state = {
        ...this.state,
        notice: `memory: ${error instanceof Error ? error.message : String(error)}`,
      };
    }
    this.render();
  }

  render(): void {
    renderControls(this.elements.controls, this.state, {
      onStep: () => void this.handleStep(),
      onContinue: () => void this.handleContinue(),
      onRunBootTrace: () => void this.handleRunBootTrace(),
    });
    if (this.sourceError !== null) {
      renderSourceError(this.elements.source, this.sourceError);
    } else if (this.sourceDoc !== null) {
      renderSource(this.elements.source, this.sourceDoc, this.state, {
        onGutterClick: (line) => void this.handleGutterClick(line),
      });
    } else {
      renderSourceError(this.elements.source, "no source file open");
    }
    renderRegisters(this.elements.registers, this.state.phase === "stopped" ? this.registers : null);
    renderMemory(this.elements.memory, this.memoryView?.addr ?? null, this.memoryView?.hex ?? null);
    renderFlow(this.elements.flow, this.trace);
    renderBenchTables(this.elements.bench, this.benchMarkdown);
  }
}
