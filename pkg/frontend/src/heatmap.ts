/**
 * Pure pixel math for the floor view: world<->canvas transforms and the
 * deviation colour ramp. Rendering proper happens in app.ts; keeping this
 * side-effect free makes it testable without a DOM.
 */
import { FloorGeometry } from "./protocol.js";
import { SensorCell } from "./state.js";

export interface Viewport {
  widthPx: number;
  heightPx: number;
  // derived
  scale: number; // px per metre
  offsetX: number;
  offsetY: number;
}

export function fitViewport(
  floor: FloorGeometry,
  widthPx: number,
  heightPx: number,
  marginPx = 10,
): Viewport {
  const wM = floor.tiles_x * floor.tile_side_m;
  const hM = floor.tiles_y * floor.tile_side_m;
  const scale = Math.min(
    (widthPx - 2 * marginPx) / wM,
    (heightPx - 2 * marginPx) / hM,
  );
  return {
    widthPx,
    heightPx,
    scale,
    offsetX: (widthPx - wM * scale) / 2,
    offsetY: (heightPx - hM * scale) / 2,
  };
}

export function worldToPx(vp: Viewport, x: number, y: number): [number, number] {
  return [vp.offsetX + x * vp.scale, vp.offsetY + y * vp.scale];
}

export function pxToWorld(vp: Viewport, px: number, py: number): [number, number] {
  return [(px - vp.offsetX) / vp.scale, (py - vp.offsetY) / vp.scale];
}

/** Cold steel blue at 0 through amber to red at 1. */
export function heatColor(t: number): [number, number, number] {
  const c = Math.max(0, Math.min(1, t));
  if (c < 0.5) {
    const u = c / 0.5;
    return [
      Math.round(40 + u * (255 - 40)),
      Math.round(70 + u * (170 - 70)),
      Math.round(120 - u * 120),
    ];
  }
  const u = (c - 0.5) / 0.5;
  return [255, Math.round(170 - u * 170), 0];
}

export interface HeatCell {
  sensorId: number;
  px: number;
  py: number;
  intensity: number; // 0..1
  rgb: [number, number, number];
}

/**
 * One dot per sensor, intensity = deviation / max deviation on the floor
 * right now (with a floor of `minFullScale` so idle noise stays dark).
 */
export function heatCells(
  floor: FloorGeometry,
  sensors: Map<number, SensorCell>,
  vp: Viewport,
  minFullScale = 20,
): HeatCell[] {
  let peak = minFullScale;
  for (const cell of sensors.values()) peak = Math.max(peak, cell.deviation);
  const out: HeatCell[] = [];
  for (const [sid, cell] of sensors) {
    const pos = floor.sensor_pos[sid];
    if (!pos) continue;
    const [px, py] = worldToPx(vp, pos[0], pos[1]);
    const intensity = cell.deviation / peak;
    out.push({ sensorId: sid, px, py, intensity, rgb: heatColor(intensity) });
  }
  return out;
}
