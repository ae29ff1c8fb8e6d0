// DOM rendering: binds the model to the dashboard markup in index.html.
// Pull-based: a 100 ms ticker re-renders whenever the model marked itself
// dirty, which keeps event handling cheap during telemetry bursts.

import { OPCODES } from "./api.js";
import { drawHkChart } from "./chart.js";
import type { ConsoleController } from "./controller.js";

const MODE_COLORS: Record<string, string> = {
  BOOT: "#888", SAFE: "#d16969", NOMINAL: "#4ec9b0",
  ADCS: "#d7ba7d", PAYLOAD: "#9cdcfe", DOWNLINK: "#c586c0",
};

export class ConsoleView {
  private el: Record<string, HTMLElement> = {};

  constructor(private readonly controller: ConsoleController) {}

  mount(): void {
    for (const id of [
      "conn-badge", "mode-badge", "clock", "hk-chart", "telemetry-body",
      "command-form", "opcode", "args", "send", "command-body",
      "image-live", "image-progress", "gallery", "log",
    ]) {
      const element = document.getElementById(id);
      if (!element) throw new Error(`missing element #${id}`);
      this.el[id] = element;
    }
    const opcodeSelect = this.el["opcode"] as HTMLSelectElement;
    for (const { opcode, name, args } of OPCODES) {
      const option = document.createElement("option");
      option.value = opcode;
      option.textContent = `${opcode} ${name}${args ? " (1 digit)" : ""}`;
      opcodeSelect.appendChild(option);
    }
    (this.el["command-form"] as HTMLFormElement).addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.sendCommand();
    });
    window.setInterval(() => {
      // composerLocked() has a time-based failsafe, so poll it too
      if (this.controller.model.takeDirty() || this.controller.model.composerLocked()) {
        this.render();
      }
    }, 100);
    this.render();
  }

  private async sendCommand(): Promise<void> {
    const opcode = (this.el["opcode"] as HTMLSelectElement).value;
    const args = (this.el["args"] as HTMLInputElement).value.trim();
    try {
      await this.controller.submitCommand(opcode, args);
    } catch (err) {
      this.controller.model.log(String(err));
    }
    this.render();
  }

  render(): void {
    const model = this.controller.model;

    const conn = this.el["conn-badge"];
    conn.textContent = model.connection;
    conn.className = `badge conn-${model.connection}`;

    const mode = this.el["mode-badge"];
    mode.textContent = model.modeName ?? "unknown";
    mode.style.background = MODE_COLORS[model.modeName ?? ""] ?? "#555";

    const clock = model.snapshot?.clock_ms ?? model.lastSeq();
    this.el["clock"].textContent = model.snapshot
      ? `t+${(model.snapshot.clock_ms / 1000).toFixed(1)}s`
      : "";

    drawHkChart(this.el["hk-chart"] as HTMLCanvasElement, model.hkSeries);

    this.renderTelemetry();
    this.renderCommands();
    this.renderImages();

    this.el["log"].textContent = model.logLines.slice(-30).join("\n");
    void clock;
  }

  private renderTelemetry(): void {
    const rows = this.controller.model.telemetryRows().slice(-40).reverse();
    this.el["telemetry-body"].innerHTML = rows
      .map((r) => {
        const fields = JSON.stringify(r.fields);
        return `<tr><td>${r.seq}</td><td>${(r.t_ms / 1000).toFixed(1)}s</td>` +
          `<td>${r.ftype_name}</td><td class="fields">${escapeHtml(fields)}</td></tr>`;
      })
      .join("");
  }

  private renderCommands(): void {
    const locked = this.controller.model.composerLocked();
    (this.el["send"] as HTMLButtonElement).disabled = locked;
    (this.el["send"] as HTMLButtonElement).textContent =
      locked ? "waiting for ack..." : "send";
    const rows = this.controller.model.commandRows().slice(-20).reverse();
    this.el["command-body"].innerHTML = rows
      .map((c) =>
        `<tr><td>${c.id}</td><td>${c.opcode}${c.args ? " " + c.args : ""}</td>` +
        `<td class="status-${c.status}">${c.status}</td></tr>`)
      .join("");
  }

  private renderImages(): void {
    const model = this.controller.model;
    let progressText = "";
    for (const [id, info] of model.images) {
      const asm = model.assemblers.get(id);
      if (!asm) continue;
      const canvas = this.el["image-live"] as HTMLCanvasElement;
      canvas.width = asm.width;
      canvas.height = asm.height;
      const ctx = canvas.getContext("2d");
      if (ctx) {
        ctx.putImageData(new ImageData(asm.pixels, asm.width, asm.height), 0, 0);
      }
      progressText = `image ${id}: ${info.lastLine}/${info.total} lines` +
        (info.complete ? " (complete)" : "");
    }
    this.el["image-progress"].textContent = progressText;
  }

  refreshGallery(): void {
    void this.controller.api.images().then((rows) => {
      this.el["gallery"].innerHTML = rows
        .map((row) =>
          `<figure><img src="${this.controller.api.imageUrl(row.image_id)}" ` +
          `width="160" height="120" alt="image ${row.image_id}">` +
          `<figcaption>#${row.image_id} sync ${row.lines_synced}/240</figcaption></figure>`)
        .join("");
    });
  }
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"]/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c] ?? c);
}
