// Source listing: line numbers, breakpoint gutter, current-line highlight.

import type { SourceDoc } from "./api.js";
import { breakpointOnLine, type ViewState } from "./state.js";

export interface SourcePaneCallbacks {
  onGutterClick(line: number): void;
}

function el(container: HTMLElement, tag: string, className?: string): HTMLElement {
  const node = container.ownerDocument.createElement(tag);
  if (className) node.className = className;
  container.appendChild(node);
  return node;
}

export function renderSourceError(container: HTMLElement, message: string): void {
  container.textContent = "";
  const banner = el(container, "div", "error-banner");
  banner.textContent = message;
}

export function renderSource(
  container: HTMLElement,
  doc: SourceDoc,
  state: ViewState,
  callbacks: SourcePaneCallbacks,
): void {
  container.textContent = "";
  const header = el(container, "div", "source-header");
  header.textContent = doc.file;

  const listing = el(container, "div", "source-listing");
  const breakable = new Set(doc.breakable_lines);
  const currentLine = state.openFile === doc.file ? state.currentLine : null;

  doc.lines.forEach((text, index) => {
    const line = index + 1;
    const row = el(listing, "div", "source-line");
    row.dataset.line = String(line);
    if (line === currentLine) row.classList.add("current");

    const gutter = el(row, "span", "gutter");
    const bp = breakpointOnLine(state, doc.breakpoints, doc.file, line);
    if (bp !== undefined) {
      gutter.classList.add(bp.enabled ? "breakpoint" : "breakpoint-disabled");
      if (bp.hit_count > 0) {
        const badge = el(gutter, "span", "hit-badge");
        badge.textContent = String(bp.hit_count);
      }
    }
    if (breakable.has(line)) {
      gutter.classList.add("breakable");
      gutter.addEventListener("click", () => callbacks.onGutterClick(line));
    } else {
      gutter.classList.add("disabled");
      gutter.title = "no address mapping for this line";
    }

    const number = el(row, "span", "line-number");
    number.textContent = String(line);
    const code = el(row, "span", "code");
    code.textContent = text === "" ? " " : text;
  });

  const current = listing.querySelector<HTMLElement>(".source-line.current");
  if (current && typeof current.scrollIntoView === "function") {
    current.scrollIntoView({ block: "center" });
  }
}
