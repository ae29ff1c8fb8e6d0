// Operator-scripted end-to-end drive against a real live pass: the backend
// runs as a subprocess, the console logic runs here, and every byte between
// them crosses real HTTP. The scripted session sends PING, then CAPTURE,
// then DOWNLINK_IMAGE, watching the composer lock/ack lifecycle and the
// progressive image build.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PNG } from "pngjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleController } from "../src/controller.js";

const PORT = 8971;
const BASE = `http://127.0.0.1:${PORT}`;
const PACE = 10; // logical seconds per wall second

let service: ChildProcess;
let controller: ConsoleController;
let galleryRefreshes = 0;

const scenario = {
  seed: 404,
  duration_s: 150.0,
  snr_db: 30.0,
  events: [],
};

async function waitFor(
  predicate: () => boolean,
  what: string,
  timeoutMs = 60_000,
): Promise<void> {
  const t0 = Date.now();
  while (!predicate()) {
    if (Date.now() - t0 > timeoutMs) throw new Error(`timeout waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 100));
  }
}

async function clockMs(): Promise<number> {
  const resp = await fetch(`${BASE}/api/state`);
  return ((await resp.json()) as { clock_ms: number }).clock_ms;
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  const scenarioPath = join(dir, "scenario.json");
  writeFileSync(scenarioPath, JSON.stringify(scenario));
  service = spawn(
    "cubelink",
    ["run", "--scenario", scenarioPath, "--session", join(dir, "session"),
     "--serve", `127.0.0.1:${PORT}`, "--pace", String(PACE)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  service.stderr?.on("data", (d: Buffer) => process.stderr.write(d));

  const t0 = Date.now();
  for (;;) {
    try {
      await clockMs();
      break;
    } catch {
      if (Date.now() - t0 > 20_000) throw new Error("service did not come up");
      await new Promise((r) => setTimeout(r, 200));
    }
  }

  controller = new ConsoleController(BASE, {
    onGalleryRefresh: () => { galleryRefreshes += 1; },
  });
  await controller.connect();
}, 40_000);

afterAll(() => {
  controller?.stop();
  service?.kill("SIGKILL");
});

describe("operator session", () => {
  it("connects and reaches NOMINAL", async () => {
    await waitFor(() => controller.model.connection === "live", "stream open");
    // BOOT 5 s + SAFE checkout 10 s, at pace 10 about 1.6 s wall
    await waitFor(() => controller.model.modeName === "NOMINAL", "NOMINAL mode");
  }, 30_000);

  it("PING: composer locks until the ack arrives", async () => {
    const id = await controller.submitCommand("01", "");
    expect(controller.model.composerLocked()).toBe(true);
    await expect(controller.submitCommand("01", "")).rejects.toThrow(/locked/);

    await waitFor(
      () => controller.model.commands.get(id)?.status === "acked",
      "PING ack",
    );
    expect(controller.model.composerLocked()).toBe(false);
  }, 30_000);

  it("CAPTURE: acked, then the 2 s capture subroutine completes", async () => {
    const id = await controller.submitCommand("02", "");
    await waitFor(
      () => controller.model.commands.get(id)?.status === "acked",
      "CAPTURE ack",
    );
    // wait out the 2000 ms (logical) PAYLOAD subroutine plus margin, so the
    // next command does not hit a busy satellite
    const ackClock = await clockMs();
    let now = ackClock;
    await waitFor(() => {
      void clockMs().then((v) => { now = v; });
      return now >= ackClock + 4000;
    }, "capture window to elapse");
  }, 30_000);

  it("DOWNLINK_IMAGE: progressive rows reach 240/240", async () => {
    const id = await controller.submitCommand("03", "");
    await waitFor(
      () => controller.model.commands.get(id)?.status === "acked",
      "DOWNLINK_IMAGE ack",
    );
    // SSTV takes ~37 logical seconds; decode happens when the segment lands
    await waitFor(
      () => [...controller.model.images.values()].some((i) => i.complete),
      "complete image",
      90_000,
    );
    const [imageId, info] = [...controller.model.images.entries()][0];
    expect(info.complete).toBe(true);
    expect(info.lastLine).toBe(240);
    expect(info.total).toBe(240);
    expect(galleryRefreshes).toBeGreaterThan(0);

    // the assembled canvas content must match the served PNG pixel-for-pixel
    const resp = await fetch(`${BASE}/api/images/${imageId}`);
    expect(resp.status).toBe(200);
    const png = PNG.sync.read(Buffer.from(await resp.arrayBuffer()));
    expect(png.width).toBe(320);
    expect(png.height).toBe(240);
    const assembled = controller.model.assemblers.get(imageId)!.toRgbBytes();
    for (let i = 0; i < png.width * png.height; i++) {
      expect(png.data[i * 4]).toBe(assembled[i * 3]);
      expect(png.data[i * 4 + 1]).toBe(assembled[i * 3 + 1]);
      expect(png.data[i * 4 + 2]).toBe(assembled[i * 3 + 2]);
    }
  }, 120_000);

  it("reload mid-pass reconstructs the same view from since=0", async () => {
    const reloaded = new ConsoleController(BASE);
    await reloaded.connect();
    try {
      const reference = controller.model;
      await waitFor(
        () => reloaded.model.lastSeq() >= reference.lastSeq(),
        "replay catch-up",
        30_000,
      );
      expect(reloaded.model.telemetryRows().map((r) => [r.seq, r.payload_hex]))
        .toEqual(reference.telemetryRows().map((r) => [r.seq, r.payload_hex]));
      expect(reloaded.model.commandRows()).toEqual(reference.commandRows());
      const refImage = [...reference.assemblers.entries()][0];
      await waitFor(
        () => (reloaded.model.assemblers.get(refImage[0])?.rowCount() ?? 0) === 240,
        "image replay",
        30_000,
      );
      expect(reloaded.model.assemblers.get(refImage[0])!.toRgbBytes())
        .toEqual(refImage[1].toRgbBytes());
      expect(reloaded.model.modeName).toBe(reference.modeName);
    } finally {
      reloaded.stop();
    }
  }, 60_000);

  it("stream resumes from the last seen event id after a drop", async () => {
    // stop the client (simulated drop), then reconnect with the cursor
    const before = controller.model.lastSeq();
    const cursor = (controller as unknown as { sse: { lastId: number } }).sse.lastId;
    controller.stop();
    const resumed = new ConsoleController(BASE);
    await resumed.connect();
    try {
      await waitFor(
        () => resumed.model.lastSeq() >= before,
        "rows resume past the cursor",
        30_000,
      );
      expect(cursor).toBeGreaterThanOrEqual(0);
      expect(resumed.model.telemetryRows().length).toBeGreaterThanOrEqual(
        controller.model.telemetryRows().length,
      );
    } finally {
      resumed.stop();
    }
  }, 60_000);
});
