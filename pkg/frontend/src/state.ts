/**
 * View model fed purely by protocol messages; no physics lives here. The
 * one derived quantity is the per-sensor baseline: readings *drop* under
 * load, so the largest value a sensor has reported is its resting level
 * and deviation = baseline - value. Normalizing by deviation instead of
 * raw counts keeps heterogeneous zero offsets from dominating the palette.
 */
import { FloorGeometry, ServerEvent } from "./protocol.js";

export interface SensorCell {
  value: number;
  active: boolean;
  baseline: number;
  deviation: number;
}

export interface TrackMarker {
  trackId: number;
  x: number;
  y: number;
  state: "tentative" | "confirmed";
  tUs: number;
  trail: Array<[number, number]>;
}

export interface WalkerHandle {
  walkerId: number;
  weightN: number;
  x: number | null;
  y: number | null;
}

export type Connection = "connecting" | "up" | "down" | "version-mismatch";

const TRAIL_LEN = 60;
const TRACK_TTL_US = 2_000_000; // markers fade when the tracker goes quiet

export class ViewModel {
  floor: FloorGeometry | null = null;
  sensors = new Map<number, SensorCell>();
  pirs = new Map<number, boolean>();
  tracks = new Map<number, TrackMarker>();
  walkers = new Map<number, WalkerHandle>(); // controller sessions only
  nodeLeds = new Map<number, [number, number, number]>();
  connection: Connection = "connecting";
  lastTUs = 0;

  apply(msg: ServerEvent): void {
    switch (msg.type) {
      case "STATE_DELTA":
        this.lastTUs = Math.max(this.lastTUs, msg.t_us);
        for (const [sid, value, active] of msg.sensors) {
          this.applySensor(sid, value, active !== 0);
        }
        for (const [pid, on] of msg.pirs) this.pirs.set(pid, on !== 0);
        this.expireTracks();
        break;
      case "FLOOR_SNAPSHOT":
        this.floor = msg.floor;
        this.lastTUs = Math.max(this.lastTUs, msg.t_us);
        for (const [sid, value, active] of msg.sensors) {
          this.applySensor(sid, value, active !== 0);
        }
        for (const [pid, on] of msg.pirs) this.pirs.set(pid, on !== 0);
        for (const t of msg.tracks) {
          this.applyTrack(t.track_id, t.x, t.y, t.state, t.t_us);
        }
        this.walkers.clear();
        for (const w of msg.walkers ?? []) {
          this.walkers.set(w.walker_id, {
            walkerId: w.walker_id,
            weightN: w.weight_n,
            x: w.x,
            y: w.y,
          });
        }
        break;
      case "TRACKS":
        this.lastTUs = Math.max(this.lastTUs, msg.t_us);
        this.applyTrack(msg.track_id, msg.x, msg.y, msg.state, msg.t_us);
        break;
      case "PIR":
        this.pirs.set(msg.pir_id, msg.active);
        break;
      case "ACTUATION":
        if (msg.kind === "led" && msg.args.length === 3) {
          const [r, g, b] = msg.args;
          this.nodeLeds.set(msg.node_id, [r!, g!, b!]);
        }
        break;
      default:
        break; // ACK/ERROR/METRICS carry no floor state
    }
  }

  private applySensor(sid: number, value: number, active: boolean): void {
    const prev = this.sensors.get(sid);
    const baseline = Math.max(prev?.baseline ?? value, value);
    this.sensors.set(sid, {
      value,
      active,
      baseline,
      deviation: Math.max(0, baseline - value),
    });
  }

  private applyTrack(
    trackId: number,
    x: number,
    y: number,
    state: "tentative" | "confirmed",
    tUs: number,
  ): void {
    const prev = this.tracks.get(trackId);
    const trail = prev ? prev.trail : [];
    trail.push([x, y]);
    if (trail.length > TRAIL_LEN) trail.shift();
    this.tracks.set(trackId, { trackId, x, y, state, tUs, trail });
  }

  private expireTracks(): void {
    for (const [id, t] of this.tracks) {
      if (this.lastTUs - t.tUs > TRACK_TTL_US) this.tracks.delete(id);
    }
  }

  confirmedTracks(): TrackMarker[] {
    return [...this.tracks.values()].filter((t) => t.state === "confirmed");
  }

  /** Deviation-weighted centre of the currently active sensors. */
  activityCentroid(minDeviation = 50): [number, number] | null {
    if (!this.floor) return null;
    let wx = 0;
    let wy = 0;
    let total = 0;
    for (const [sid, cell] of this.sensors) {
      if (!cell.active || cell.deviation < minDeviation) continue;
      const pos = this.floor.sensor_pos[sid];
      if (!pos) continue;
      wx += cell.deviation * pos[0];
      wy += cell.deviation * pos[1];
      total += cell.deviation;
    }
    return total > 0 ? [wx / total, wy / total] : null;
  }
}
