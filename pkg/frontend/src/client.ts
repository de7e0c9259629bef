/**
 * Transport-agnostic gateway client. The browser hands it a WebSocket (via
 * the bridge), tests hand it a loopback stub, node tooling can hand it a
 * raw TCP socket; the client only ever sees lines.
 */
import {
  ClientCommand,
  PROTOCOL_VERSION,
  ServerEvent,
  Topic,
  encodeCommand,
  parseServerLine,
} from "./protocol.js";

export interface Transport {
  send(line: string): void;
  close(): void;
}

export type Role = "observer" | "controller";

// Omit must distribute over the command union or TS collapses it
type DistributiveOmit<T, K extends PropertyKey> = T extends unknown
  ? Omit<T, K>
  : never;
export type CommandBody = DistributiveOmit<ClientCommand, "req">;

type Pending = {
  resolve: (msg: ServerEvent) => void;
  reject: (err: Error) => void;
};

export class GatewayClient {
  private transport: Transport | null = null;
  private nextReq = 1;
  private pending = new Map<number, Pending>();
  private buffer = "";

  /** every command ever sent, for transcript validation */
  readonly transcript: ClientCommand[] = [];

  versionMismatch: string | null = null;
  onEvent: (msg: ServerEvent) => void = () => {};

  attach(transport: Transport): void {
    this.transport = transport;
    this.buffer = "";
  }

  detach(reason = "connection lost"): void {
    this.transport = null;
    const err = new Error(reason);
    for (const p of this.pending.values()) p.reject(err);
    this.pending.clear();
  }

  get connected(): boolean {
    return this.transport !== null;
  }

  /** Feed raw incoming data; handles partial lines from stream transports. */
  handleData(data: string): void {
    this.buffer += data;
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 1);
      if (line.trim().length) this.handleLine(line);
    }
  }

  private handleLine(line: string): void {
    const msg = parseServerLine(line);
    if (msg.type === "ERROR" && /protocol version/.test(msg.error)) {
      // blocking condition: the server will hang up, retrying is pointless
      this.versionMismatch = msg.error;
    }
    const req = "req" in msg && typeof msg.req === "number" ? msg.req : null;
    if (req !== null && this.pending.has(req)) {
      const p = this.pending.get(req)!;
      this.pending.delete(req);
      if (msg.type === "ERROR") p.reject(new Error(msg.error));
      else p.resolve(msg);
      return;
    }
    this.onEvent(msg);
  }

  /** Send a command; resolves with its ACK (or snapshot), rejects on ERROR. */
  request(cmd: CommandBody): Promise<ServerEvent> {
    if (!this.transport) return Promise.reject(new Error("not connected"));
    const req = this.nextReq++;
    const full = { ...cmd, req } as ClientCommand;
    const line = encodeCommand(full); // validates against the grammar
    this.transcript.push(full);
    return new Promise((resolve, reject) => {
      this.pending.set(req, { resolve, reject });
      this.transport!.send(line);
    });
  }

  hello(role: Role = "observer"): Promise<ServerEvent> {
    return this.request({ type: "HELLO", version: PROTOCOL_VERSION, role });
  }

  subscribe(topics: Topic[], rateHz?: number): Promise<ServerEvent> {
    return this.request({
      type: "SUBSCRIBE",
      topics,
      ...(rateHz !== undefined ? { rate_hz: rateHz } : {}),
    });
  }

  snapshot(): Promise<ServerEvent> {
    return this.request({ type: "SNAPSHOT" });
  }
}

export interface ReconnectOpts {
  baseMs?: number;
  maxMs?: number;
  setTimer?: (fn: () => void, ms: number) => unknown;
}

/** Exponential backoff schedule: base·2^attempt capped at max. */
export function backoffDelay(attempt: number, baseMs = 500, maxMs = 10_000): number {
  return Math.min(baseMs * 2 ** attempt, maxMs);
}

/**
 * Keeps a client attached across transport drops. `open` must create a new
 * transport and call back with it once usable (or throw synchronously /
 * reject to count as a failed attempt).
 */
export class Reconnector {
  private attempt = 0;
  stopped = false;

  constructor(
    private client: GatewayClient,
    private open: () => Promise<Transport>,
    private opts: ReconnectOpts = {},
  ) {}

  get currentAttempt(): number {
    return this.attempt;
  }

  async start(): Promise<void> {
    const setTimer = this.opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    for (;;) {
      if (this.stopped || this.client.versionMismatch) return;
      try {
        const t = await this.open();
        this.attempt = 0;
        this.client.attach(t);
        return;
      } catch {
        const delay = backoffDelay(
          this.attempt++,
          this.opts.baseMs,
          this.opts.maxMs,
        );
        await new Promise((res) => setTimer(() => res(null), delay));
      }
    }
  }

  /** Call when the active transport drops; detaches and retries. */
  onDrop(): Promise<void> {
    this.client.detach();
    return this.start();
  }

  stop(): void {
    this.stopped = true;
  }
}
