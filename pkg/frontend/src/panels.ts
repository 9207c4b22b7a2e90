// Side panels: registers, memory dump (explicit reads only), boot-flow
// graph, and the scheduler benchmark tables.

import type { RegistersDoc, TraceDoc } from "./api.js";

function clear(container: HTMLElement): Document {
  container.textContent = "";
  return container.ownerDocument;
}

function placeholder(container: HTMLElement, text: string): void {
  const doc = clear(container);
  const span = doc.createElement("span");
  span.className = "placeholder";
  span.textContent = text;
  container.appendChild(span);
}

export function renderRegisters(container: HTMLElement, regs: RegistersDoc | null): void {
  if (regs === null) {
    placeholder(container, "registers unavailable");
    return;
  }
  const doc = clear(container);
  const table = doc.createElement("table");
  table.className = "registers";
  for (const name of regs.names) {
    const row = doc.createElement("tr");
    const label = doc.createElement("td");
    label.textContent = name;
    if (name === regs.pc_name) row.className = "pc-row";
    const value = doc.createElement("td");
    const raw = regs.values[name] ?? 0;
    value.textContent = "0x" + raw.toString(16).padStart(8, "0");
    row.append(label, value);
    table.appendChild(row);
  }
  container.appendChild(table);
}

export function renderMemory(container: HTMLElement, addr: number | null, hex: string | null): void {
  if (addr === null || hex === null) {
    placeholder(container, "enter an address and length, then read");
    return;
  }
  const doc = clear(container);
  const pre = doc.createElement("pre");
  pre.className = "memdump";
  const lines: string[] = [];
  for (let offset = 0; offset < hex.length; offset += 32) {
    const chunk = hex.slice(offset, offset + 32);
    const bytes = chunk.match(/../g)?.join(" ") ?? "";
    lines.push(`0x${(addr + offset / 2).toString(16).padStart(8, "0")}  ${bytes}`);
  }
  pre.textContent = lines.join("\n");
  container.appendChild(pre);
}

/** Milestone chain, left to right, in recorded event order. */
export function renderFlow(container: HTMLElement, trace: TraceDoc | null): void {
  if (trace === null || trace.events.length === 0) {
    placeholder(container, "no boot trace recorded yet");
    return;
  }
  const doc = clear(container);
  const chain = doc.createElement("div");
  chain.className = "flow-chain";
  trace.events.forEach((event, index) => {
    if (index > 0) {
      const arrow = doc.createElement("span");
      arrow.className = "flow-arrow";
      arrow.textContent = "→";
      chain.appendChild(arrow);
    }
    const node = doc.createElement("span");
    node.className = "milestone";
    node.dataset.milestone = event.milestone;
    node.textContent = event.milestone;
    const pc = doc.createElement("small");
    pc.textContent = " 0x" + event.pc.toString(16);
    node.appendChild(pc);
    chain.appendChild(node);
  });
  container.appendChild(chain);
  const outcome = doc.createElement("div");
  outcome.className = `flow-outcome outcome-${trace.outcome}`;
  outcome.textContent = `outcome: ${trace.outcome}`;
  container.appendChild(outcome);
}

/** Render the markdown bench tables; the trailing column becomes a badge. */
export function renderBenchTables(container: HTMLElement, markdown: string | null): void {
  if (markdown === null || !markdown.includes("|")) {
    placeholder(container, "no benchmark data loaded");
    return;
  }
  const doc = clear(container);
  let table: HTMLTableElement | null = null;
  for (const raw of markdown.split("\n")) {
    const line = raw.trim();
    if (line.startsWith("#")) {
      const heading = doc.createElement("h3");
      heading.textContent = line.replace(/^#+\s*/, "");
      container.appendChild(heading);
      table = null;
      continue;
    }
    if (!line.startsWith("|")) {
      table = null;
      continue;
    }
    const cells = line.split("|").slice(1, -1).map((cell) => cell.trim());
    if (cells.every((cell) => /^-+$/.test(cell))) continue; // separator row
    if (table === null) {
      table = doc.createElement("table");
      table.className = "bench";
      container.appendChild(table);
      const head = doc.createElement("tr");
      for (const cell of cells) {
        const th = doc.createElement("th");
        th.textContent = cell;
        head.appendChild(th);
      }
      table.appendChild(head);
      continue;
    }
    const row = doc.createElement("tr");
    cells.forEach((cell, index) => {
      const td = doc.createElement("td");
      if (index === cells.length - 1) {
        const badge = doc.createElement("span");
        badge.className = "faster-badge";
        badge.textContent = cell;
        td.appendChild(badge);
      } else {
        td.textContent = cell;
      }
      row.appendChild(td);
    });
    table.appendChild(row);
  }
}
