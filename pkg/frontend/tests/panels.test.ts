import { describe, expect, it } from "vitest";

import { renderBenchTables, renderFlow, renderMemory, renderRegisters } from "../src/panels.js";
import { dom, element } from "./helpers.js";

const TRACE = {
  catalog: "freebsd8-i386",
  outcome: "completed",
  events: [
    { seq: 1, milestone: "boot0", pc: 0x7c00, step_budget_used: 1 },
    { seq: 2, milestone: "boot2", pc: 0x7e00, step_budget_used: 2 },
    { seq: 3, milestone: "loader", pc: 0x7f00, step_budget_used: 3 },
    { seq: 4, milestone: "init386", pc: 0x8000, step_budget_used: 4 },
  ],
  warnings: [],
};

const BENCH_MD = `# scheduler benchmark comparison

## real time statistics (seconds)

| Concurrent Processes | 4BSD | 4BSD Stddev | ULE | ULE Stddev | faster |
| --- | --- | --- | --- | --- | --- |
| 2 | 2346.29 | 1.89 | 2371.9 | 1.212 | 4BSD |
| 4 | 1999 | 0.68 | 2007.8 | 2.58 | 4BSD |
`;

describe("renderFlow", () => {
  it("renders milestones left to right in event order", () => {
    const { document } = dom();
    const panel = element(document);
    renderFlow(panel, TRACE);
    const nodes = [...panel.querySelectorAll(".milestone")] as HTMLElement[];
    expect(nodes.map((node) => node.dataset.milestone)).toEqual([
      "boot0", "boot2", "loader", "init386",
    ]);
    expect(panel.querySelectorAll(".flow-arrow")).toHaveLength(3);
    expect(panel.querySelector(".flow-outcome")!.textContent).toContain("completed");
  });

  it("empty trace shows a placeholder", () => {
    const { document } = dom();
    const panel = element(document);
    renderFlow(panel, null);
    expect(panel.querySelector(".placeholder")).not.toBeNull();
    renderFlow(panel, { ...TRACE, events: [] });
    expect(panel.querySelector(".placeholder")).not.toBeNull();
  });
});

describe("renderBenchTables", () => {
  it("renders rows with faster badges", () => {
    const { document } = dom();
    const panel = element(document);
    renderBenchTables(panel, BENCH_MD);
    const badges = [...panel.querySelectorAll(".faster-badge")].map((node) => node.textContent);
    expect(badges).toEqual(["4BSD", "4BSD"]);
    expect(panel.querySelectorAll("table.bench tr")).toHaveLength(3); // header + 2 rows
    expect(panel.textContent).toContain("2346.29");
  });

  it("placeholder without data", () => {
    const { document } = dom();
    const panel = element(document);
    renderBenchTables(panel, null);
    expect(panel.querySelector(".placeholder")).not.toBeNull();
  });
});

describe("renderRegisters", () => {
  it("lists registers and marks the pc row", () => {
    const { document } = dom();
    const panel = element(document);
    renderRegisters(panel, {
      names: ["EAX", "EIP"],
      values: { EAX: 0, EIP: 0x7c00 },
      pc_name: "EIP",
    });
    expect(panel.textContent).toContain("0x00007c00");
    expect(panel.querySelector(".pc-row")!.textContent).toContain("EIP");
  });
});

describe("renderMemory", () => {
  it("hex-dumps 16 bytes per row", () => {
    const { document } = dom();
    const panel = element(document);
    renderMemory(panel, 0x7dfe, "55aa");
    expect(panel.querySelector(".memdump")!.textContent).toContain("0x00007dfe  55 aa");
  });
});
