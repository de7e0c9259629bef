/**
 * Wire grammar for the gateway protocol (version 1): newline-delimited JSON
 * over TCP, reachable from the browser through the bundled WebSocket bridge.
 *
 * Every schema here mirrors PROTOCOL.md in the simulator repo. The client
 * refuses to send anything these schemas reject, so a recorded transcript
 * validating against `clientCommand` is a hard guarantee, not a convention.
 */
import { z } from "zod";

export const PROTOCOL_VERSION = 1;

export const TOPICS = ["floor", "tracks", "pir", "actuations", "metrics"] as const;
export type Topic = (typeof TOPICS)[number];

const req = z.number().int().positive();
const rgb = z.tuple([
  z.number().int().min(0).max(255),
  z.number().int().min(0).max(255),
  z.number().int().min(0).max(255),
]);

// waypoints may omit t; the server schedules them at speed_mps from "now"
const waypoint = z.union([
  z.tuple([z.number(), z.number()]),
  z.tuple([z.number(), z.number(), z.number().nullable()]),
]);

export const clientCommand = z.discriminatedUnion("type", [
  z.object({
    type: z.literal("HELLO"),
    req,
    version: z.literal(PROTOCOL_VERSION),
    role: z.enum(["observer", "controller"]).optional(),
  }),
  z.object({
    type: z.literal("SUBSCRIBE"),
    req,
    topics: z.array(z.enum(TOPICS)).min(1),
    rate_hz: z.number().positive().optional(),
  }),
  z.object({ type: z.literal("SNAPSHOT"), req }),
  z.object({
    type: z.literal("SPAWN_WALKER"),
    req,
    path: z.array(waypoint).min(1),
    weight_n: z.number().positive().optional(),
    speed_mps: z.number().positive().optional(),
    mode: z.enum(["point", "gait"]).optional(),
  }),
  z.object({
    type: z.literal("MOVE_WALKER"),
    req,
    walker_id: z.number().int().nonnegative(),
    x: z.number(),
    y: z.number(),
    t: z.number().nullable().optional(),
    speed_mps: z.number().positive().optional(),
  }),
  z.object({
    type: z.literal("REMOVE_WALKER"),
    req,
    walker_id: z.number().int().nonnegative(),
  }),
  z.object({
    type: z.literal("SET_ALGORITHM"),
    req,
    name: z.string().min(1),
    params: z.record(z.union([z.number(), z.string()])).optional(),
  }),
  z.object({
    type: z.literal("ACTUATE"),
    req,
    node_id: z.number().int().nonnegative(),
    led: rgb.optional(),
    sound: z.number().int().optional(),
  }),
  z.object({ type: z.literal("RECORD_START"), req, path: z.string().min(1) }),
  z.object({ type: z.literal("RECORD_STOP"), req }),
  z.object({ type: z.literal("PAUSE"), req }),
  z.object({ type: z.literal("RESUME"), req }),
]);
export type ClientCommand = z.infer<typeof clientCommand>;

const sensorEntry = z.tuple([z.number().int(), z.number().int(), z.number()]);
const pirEntry = z.tuple([z.number().int(), z.number()]);

const floorGeometry = z.object({
  tiles_x: z.number().int().positive(),
  tiles_y: z.number().int().positive(),
  tile_side_m: z.number().positive(),
  sensor_pos: z.array(z.tuple([z.number(), z.number()])),
  pir_zones: z.array(z.tuple([z.number(), z.number(), z.number(), z.number()])),
  nodes: z.array(
    z.object({
      node_id: z.number().int().nonnegative(),
      x: z.number(),
      y: z.number(),
      actuator: z.boolean(),
      pir: z.number().int().nullable(),
    }),
  ),
});
export type FloorGeometry = z.infer<typeof floorGeometry>;

const trackState = z.enum(["tentative", "confirmed"]);

export const serverEvent = z.discriminatedUnion("type", [
  z.object({ type: z.literal("ACK"), req: z.number().int() }).passthrough(),
  z
    .object({
      type: z.literal("ERROR"),
      req: z.number().int().nullable(),
      error: z.string(),
    })
    .passthrough(),
  z.object({
    type: z.literal("STATE_DELTA"),
    t_us: z.number().int(),
    sensors: z.array(sensorEntry),
    pirs: z.array(pirEntry),
  }),
  z
    .object({
      type: z.literal("FLOOR_SNAPSHOT"),
      t_us: z.number().int(),
      sensors: z.array(sensorEntry),
      pirs: z.array(pirEntry),
      tracks: z.array(
        z.object({
          track_id: z.number().int(),
          x: z.number(),
          y: z.number(),
          state: trackState,
          t_us: z.number().int(),
        }),
      ),
      floor: floorGeometry,
      walkers: z
        .array(
          z.object({
            walker_id: z.number().int(),
            weight_n: z.number(),
            x: z.number().nullable(),
            y: z.number().nullable(),
          }),
        )
        .optional(),
      req: z.number().int().optional(),
    })
    .passthrough(),
  z.object({
    type: z.literal("TRACKS"),
    t_us: z.number().int(),
    node_id: z.number().int(),
    track_id: z.number().int(),
    x: z.number(),
    y: z.number(),
    strength: z.number(),
    state: trackState,
  }),
  z.object({
    type: z.literal("PIR"),
    t_us: z.number().int(),
    pir_id: z.number().int(),
    active: z.boolean(),
  }),
  z.object({
    type: z.literal("ACTUATION"),
    t_us: z.number().int(),
    node_id: z.number().int(),
    kind: z.enum(["led", "sound"]),
    args: z.array(z.number()),
  }),
  // kv is a flat "key=value key=value" summary string
  z.object({ type: z.literal("METRICS"), kv: z.string() }),
]);
export type ServerEvent = z.infer<typeof serverEvent>;

export function encodeCommand(cmd: ClientCommand): string {
  // throws if the command drifted from the grammar; nothing invalid leaves
  return JSON.stringify(clientCommand.parse(cmd)) + "\n";
}

export function parseServerLine(line: string): ServerEvent {
  return serverEvent.parse(JSON.parse(line));
}

/** Check a recorded outgoing transcript line-by-line; returns the failures. */
export function validateTranscript(lines: unknown[]): string[] {
  const problems: string[] = [];
  lines.forEach((obj, i) => {
    const res = clientCommand.safeParse(obj);
    if (!res.success) problems.push(`line ${i}: ${res.error.issues[0]?.message}`);
  });
  return problems;
}
