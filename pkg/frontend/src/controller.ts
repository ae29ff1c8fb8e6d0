// Wires the API client and the event stream into the model. DOM-free, so
// the whole operator workflow is testable against a real service from Node.

import { ApiClient, OPCODES } from "./api.js";
import { ConsoleModel } from "./model.js";
import type { AckEvent, ImageProgressEvent } from "./model.js";
import type { TelemetryRow } from "./api.js";
import { SseClient, type SseEvent } from "./sse.js";

export type ConsoleCallbacks = {
  onGalleryRefresh?: () => void; // an image just completed
};

export class ConsoleController {
  readonly api: ApiClient;
  readonly model = new ConsoleModel();
  private sse: SseClient | null = null;
  private stopped = false;

  constructor(base = "", private readonly callbacks: ConsoleCallbacks = {}) {
    this.api = new ApiClient(base);
  }

  async connect(): Promise<void> {
    this.model.setConnection("connecting");
    try {
      const [state, commands] = await Promise.all([
        this.api.state(),
        this.api.commands(),
      ]);
      this.model.applyState(state);
      this.model.applyCommandList(commands);
    } catch {
      this.model.setConnection("disconnected");
    }
    this.sse = new SseClient(
      this.api.base.replace(/\/$/, "") + "/api/stream",
      {
        onEvent: (event) => this.applyEvent(event),
        onOpen: () => this.model.setConnection("live"),
        onDisconnect: (willRetry) => {
          this.model.setConnection("disconnected");
          if (willRetry) {
            // the model keeps the last seen event id; the resume query
            // replays exactly what was missed, and idempotency drops overlap
            void this.refreshAfterGap();
          }
        },
        onEnd: () => this.model.setConnection("ended"),
      },
      { retryDelayMs: 1000 },
    );
    this.sse.start();
  }

  stop(): void {
    this.stopped = true;
    this.sse?.stop();
  }

  private async refreshAfterGap(): Promise<void> {
    if (this.stopped) return;
    try {
      const commands = await this.api.commands();
      this.model.applyCommandList(commands);
      const state = await this.api.state();
      this.model.applyState(state);
    } catch {
      // still down; the SSE retry loop owns reconnection
    }
  }

  applyEvent(event: SseEvent): void {
    switch (event.type) {
      case "telemetry":
        this.model.applyTelemetry(event.data as TelemetryRow);
        break;
      case "mode":
        this.model.applyMode((event.data as { mode_name: string }).mode_name);
        break;
      case "ack":
        this.model.applyAck(event.data as AckEvent);
        break;
      case "image-progress": {
        const completed = this.model.applyImageProgress(
          event.data as ImageProgressEvent,
        );
        if (completed) this.callbacks.onGalleryRefresh?.();
        break;
      }
      case "log": {
        const message = (event.data as { message?: string }).message;
        if (message) this.model.log(message);
        break;
      }
      default:
        break;
    }
  }

  /** POST the composed command; locks the composer until it resolves. */
  async submitCommand(opcode: string, args: string): Promise<number> {
    if (this.model.composerLocked()) {
      throw new Error("composer locked: previous command still in flight");
    }
    const spec = OPCODES.find((o) => o.opcode === opcode);
    if (!spec) throw new Error(`unknown opcode ${opcode}`);
    if (spec.args > 0 && args.length !== spec.args) {
      throw new Error(`${spec.name} needs ${spec.args} argument digit(s)`);
    }
    const id = await this.api.sendCommand(opcode, args);
    this.model.markSent(id, opcode, args);
    return id;
  }
}
