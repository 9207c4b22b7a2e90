// Browser entry point: grab the layout nodes and boot the controller.

import { ApiClient } from "./api.js";
import { DebuggerApp } from "./app.js";

function need(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing layout element #${id}`);
  return node;
}

const app = new DebuggerApp(new ApiClient(""), {
  controls: need("controls"),
  source: need("source"),
  registers: need("registers"),
  memory: need("memory"),
  flow: need("flow"),
  bench: need("bench"),
});

const memForm = need("memory-form") as HTMLFormElement;
memForm.addEventListener("submit", (event) => {
  event.preventDefault();
  const addr = (need("mem-addr") as HTMLInputElement).value;
  const len = (need("mem-len") as HTMLInputElement).value;
  void app.handleReadMemory(parseInt(addr, 16), parseInt(len, 10));
});

void app.start();
