// Run controls: step / continue, phase indicator, transient notices.
// Buttons are enabled only while the target is stopped and no command is
// outstanding; they re-enable when the next server event lands.

import type { ViewState } from "./state.js";

export interface ControlActions {
  onStep(): void;
  onContinue(): void;
  onRunBootTrace(): void;
}

export function renderControls(
  container: HTMLElement,
  state: ViewState,
  actions: ControlActions,
): void {
  container.textContent = "";
  const doc = container.ownerDocument;

  const phase = doc.createElement("span");
  phase.className = `phase phase-${state.phase}`;
  phase.textContent = state.phase;
  container.appendChild(phase);

  const enabled = state.phase === "stopped" && !state.controlsBusy;
  const make = (label: string, id: string, onClick: () => void, allow: boolean) => {
    const button = doc.createElement("button");
    button.id = id;
    button.textContent = label;
    button.disabled = !allow;
    button.addEventListener("click", onClick);
    container.appendChild(button);
    return button;
  };
  make("step", "btn-step", actions.onStep, enabled);
  make("continue", "btn-continue", actions.onContinue, enabled);
  make("trace boot", "btn-trace", actions.onRunBootTrace, enabled);

  if (state.location) {
    const where = doc.createElement("span");
    where.className = "where";
    where.textContent = state.location.display;
    container.appendChild(where);
  }
  if (state.notice) {
    const notice = doc.createElement("span");
    notice.className = "notice";
    notice.textContent = state.notice;
    container.appendChild(notice);
  }
}
