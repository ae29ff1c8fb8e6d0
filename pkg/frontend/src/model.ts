// Console state: everything the operator sees, derived purely from the
// API and the event stream. Applying the same event twice is a no-op, so
// a reconnect replay (?since) can overlap safely and a full reload from
// since=0 reconstructs the identical view.

import type { CommandRow, Housekeeping, StateSnapshot, TelemetryRow } from "./api.js";
import { ImageAssembler } from "./image.js";

export type ConnectionState = "connecting" | "live" | "disconnected" | "ended";

export type AckEvent = {
  id: number;
  opcode: string;
  args: string;
  status: "acked" | "rejected" | "failed-timeout";
  ack_seq: number | null;
};

export type ImageProgressEvent = {
  image_id: number | null;
  line: number;
  total: number;
  row_index: number;
  row_rgb_base64: string;
};

export type HkSample = { clock_ms: number; battery_mv: number; omega_dps: number };

export type ComposerState = {
  opcode: string;
  args: string;
  inFlightId: number | null;
  sentAtWall: number | null;
};

export type CommandHistoryRow = {
  id: number;
  opcode: string;
  args: string;
  status: "pending" | "acked" | "rejected" | "failed-timeout";
};

const LOG_LIMIT = 200;
export const COMPOSER_TIMEOUT_MS = 30_000; // wall-clock failsafe; the service
// normally resolves every command via an ack or timeout event well before this

export class ConsoleModel {
  connection: ConnectionState = "connecting";
  snapshot: StateSnapshot | null = null;
  modeName: string | null = null;

  telemetry = new Map<number, TelemetryRow>();
  hkSeries: HkSample[] = [];

  commands = new Map<number, CommandHistoryRow>();
  composer: ComposerState = { opcode: "01", args: "", inFlightId: null, sentAtWall: null };

  images = new Map<number, { complete: boolean; lastLine: number; total: number }>();
  assemblers = new Map<number, ImageAssembler>();

  logLines: string[] = [];

  private dirty = false;

  /** View layers poll this and clear it after rendering. */
  takeDirty(): boolean {
    const was = this.dirty;
    this.dirty = false;
    return was;
  }

  private touch(): void {
    this.dirty = true;
  }

  // -- connection -------------------------------------------------------------

  setConnection(state: ConnectionState): void {
    if (this.connection !== state) {
      this.connection = state;
      this.log(`connection: ${state}`);
      this.touch();
    }
  }

  applyState(snapshot: StateSnapshot): void {
    this.snapshot = snapshot;
    if (snapshot.mode_name) this.modeName = snapshot.mode_name;
    this.touch();
  }

  applyCommandList(rows: CommandRow[]): void {
    for (const row of rows) {
      this.commands.set(row.id, {
        id: row.id, opcode: row.opcode, args: row.args, status: row.status,
      });
      if (row.status !== "pending" && this.composer.inFlightId === row.id) {
        this.composer.inFlightId = null;
        this.composer.sentAtWall = null;
      }
    }
    this.touch();
  }

  // -- stream events -----------------------------------------------------------

  applyTelemetry(row: TelemetryRow): void {
    if (this.telemetry.has(row.seq)) return; // replay overlap: idempotent
    this.telemetry.set(row.seq, row);
    if (row.ftype_name === "housekeeping") {
      const hk = row.fields as unknown as Housekeeping;
      if (typeof hk.clock_ms === "number") {
        const [gx, gy, gz] = hk.gyro_cds;
        this.hkSeries.push({
          clock_ms: hk.clock_ms,
          battery_mv: hk.battery_mv,
          omega_dps: Math.hypot(gx, gy, gz) / 100,
        });
      }
    }
    this.touch();
  }

  applyMode(modeName: string): void {
    if (this.modeName !== modeName) {
      this.modeName = modeName;
      this.log(`mode: ${modeName}`);
      this.touch();
    }
  }

  applyAck(event: AckEvent): void {
    this.commands.set(event.id, {
      id: event.id, opcode: event.opcode, args: event.args, status: event.status,
    });
    if (this.composer.inFlightId === event.id) {
      this.composer.inFlightId = null;
      this.composer.sentAtWall = null;
      this.log(`command ${event.opcode} ${event.status}`);
    }
    this.touch();
  }

  applyImageProgress(event: ImageProgressEvent): boolean {
    const id = event.image_id ?? 0;
    let asm = this.assemblers.get(id);
    if (!asm) {
      asm = new ImageAssembler(event.total);
      this.assemblers.set(id, asm);
      this.images.set(id, { complete: false, lastLine: 0, total: event.total });
    }
    asm.applyRow(event.row_index, event.row_rgb_base64);
    const info = this.images.get(id)!;
    info.lastLine = Math.max(info.lastLine, event.line);
    const completed = asm.isComplete() && !info.complete;
    if (completed) {
      info.complete = true;
      this.log(`image ${id} complete (${event.total} lines)`);
    }
    this.touch();
    return completed; // caller refreshes the gallery on completion
  }

  log(line: string): void {
    this.logLines.push(line);
    if (this.logLines.length > LOG_LIMIT) {
      this.logLines.splice(0, this.logLines.length - LOG_LIMIT);
    }
    this.touch();
  }

  // -- composer ---------------------------------------------------------------

  composerLocked(nowWall: number = Date.now()): boolean {
    const { inFlightId, sentAtWall } = this.composer;
    if (inFlightId === null) return false;
    if (sentAtWall !== null && nowWall - sentAtWall > COMPOSER_TIMEOUT_MS) {
      // failsafe: service unreachable and nothing resolved the command
      const row = this.commands.get(inFlightId);
      if (row && row.status === "pending") row.status = "failed-timeout";
      this.composer.inFlightId = null;
      this.composer.sentAtWall = null;
      this.touch();
      return false;
    }
    return true;
  }

  markSent(id: number, opcode: string, args: string, nowWall: number = Date.now()): void {
    this.commands.set(id, { id, opcode, args, status: "pending" });
    this.composer.inFlightId = id;
    this.composer.sentAtWall = nowWall;
    this.log(`sent ${opcode}${args ? " " + args : ""} (id ${id})`);
    this.touch();
  }

  // -- derived views ------------------------------------------------------------

  telemetryRows(): TelemetryRow[] {
    return [...this.telemetry.values()].sort((a, b) => a.seq - b.seq);
  }

  commandRows(): CommandHistoryRow[] {
    return [...this.commands.values()].sort((a, b) => a.id - b.id);
  }

  lastSeq(): number {
    let max = -1;
    for (const seq of this.telemetry.keys()) if (seq > max) max = seq;
    return max;
  }
}
