// Minimal dual-series strip chart on a canvas: battery (mV) and gyro
// magnitude (deg/s) over the logical clock. No dependencies; redraws whole.

import type { HkSample } from "./model.js";

const BATTERY_COLOR = "#4ec9b0";
const OMEGA_COLOR = "#d7ba7d";
const GRID_COLOR = "#2a2f3a";

export function drawHkChart(canvas: HTMLCanvasElement, series: HkSample[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = GRID_COLOR;
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  if (series.length === 0) {
    ctx.fillStyle = "#777";
    ctx.fillText("no housekeeping yet", 8, height / 2);
    return;
  }
  const t0 = series[0].clock_ms;
  const t1 = Math.max(series[series.length - 1].clock_ms, t0 + 1);
  const x = (t: number) => 4 + ((t - t0) / (t1 - t0)) * (width - 8);

  drawSeries(ctx, series, x, height, (s) => s.battery_mv, BATTERY_COLOR);
  drawSeries(ctx, series, x, height, (s) => s.omega_dps, OMEGA_COLOR);

  ctx.fillStyle = BATTERY_COLOR;
  ctx.fillText(`battery ${series[series.length - 1].battery_mv} mV`, 8, 12);
  ctx.fillStyle = OMEGA_COLOR;
  ctx.fillText(`|gyro| ${series[series.length - 1].omega_dps.toFixed(2)} deg/s`, 8, 24);
}

function drawSeries(
  ctx: CanvasRenderingContext2D,
  series: HkSample[],
  x: (t: number) => number,
  height: number,
  pick: (s: HkSample) => number,
  color: string,
): void {
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    const v = pick(s);
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (hi - lo < 1e-9) {
    lo -= 1;
    hi += 1;
  }
  const y = (v: number) => height - 6 - ((v - lo) / (hi - lo)) * (height - 30);
  ctx.strokeStyle = color;
  ctx.beginPath();
  series.forEach((s, i) => {
    const px = x(s.clock_ms);
    const py = y(pick(s));
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.stroke();
  for (const s of series) {
    ctx.fillStyle = color;
    ctx.fillRect(x(s.clock_ms) - 1.5, y(pick(s)) - 1.5, 3, 3);
  }
}
