// Typed client for the ground-station HTTP API. The console performs no
// state mutation other than POST /api/command; everything else is reads.

export type Housekeeping = {
  clock_ms: number;
  mode: number;
  mode_name: string;
  stale: boolean;
  battery_mv: number;
  temp_c_x10: number;
  gyro_cds: [number, number, number];
  mag_tut: [number, number, number];
};

export type StateSnapshot = {
  connection: "live" | "complete" | "session";
  clock_ms: number;
  mode_name: string | null;
  housekeeping: Housekeeping | null;
  commands: number;
  frames: number;
  images: number;
};

export type TelemetryRow = {
  seq: number;
  t_ms: number;
  ftype: number;
  ftype_name: string;
  payload_hex: string;
  fields: Record<string, unknown>;
};

export type CommandRow = {
  id: number;
  t_ms: number;
  opcode: string;
  args: string;
  source: string;
  status: "pending" | "acked" | "rejected" | "failed-timeout";
  ack_seq: number | null;
  ack_ok: boolean | null;
  acked_t_ms: number | null;
};

export type ImageRow = {
  image_id: number;
  t_ms: number;
  vis_ok: boolean;
  lines_synced: number;
  lines_filled: number;
  mean_sync_error_ms: number;
};

export class ApiClient {
  constructor(readonly base: string = "") {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.url(path));
    if (!resp.ok) throw new Error(`GET ${path}: ${resp.status}`);
    return (await resp.json()) as T;
  }

  state(): Promise<StateSnapshot> {
    return this.getJson("/api/state");
  }

  telemetry(since = -1): Promise<TelemetryRow[]> {
    return this.getJson(`/api/telemetry?since=${since}`);
  }

  commands(): Promise<CommandRow[]> {
    return this.getJson("/api/commands");
  }

  images(): Promise<ImageRow[]> {
    return this.getJson("/api/images");
  }

  imageUrl(imageId: number): string {
    return this.url(`/api/images/${imageId}`);
  }

  async sendCommand(opcode: string, args: string): Promise<number> {
    const resp = await fetch(this.url("/api/command"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ opcode, args }),
    });
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`command rejected (${resp.status}): ${detail}`);
    }
    const body = (await resp.json()) as { id: number };
    return body.id;
  }
}

// the uplink vocabulary the composer offers
export const OPCODES: { opcode: string; name: string; args: number }[] = [
  { opcode: "01", name: "PING", args: 0 },
  { opcode: "02", name: "CAPTURE", args: 0 },
  { opcode: "03", name: "DOWNLINK_IMAGE", args: 0 },
  { opcode: "04", name: "DOWNLINK_TELEMETRY", args: 0 },
  { opcode: "05", name: "SET_MODE", args: 1 },
  { opcode: "06", name: "REBOOT", args: 0 },
];
