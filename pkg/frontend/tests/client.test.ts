import { describe, expect, it } from "vitest";

import { GatewayClient, Reconnector, Transport, backoffDelay } from "../src/client.js";

class StubTransport implements Transport {
  sent: string[] = [];
  send(line: string) {
    this.sent.push(line);
  }
  close() {}
  lastReq(): number {
    return JSON.parse(this.sent[this.sent.length - 1]!).req;
  }
}

describe("GatewayClient", () => {
  it("matches ACKs to requests by req id", async () => {
    const c = new GatewayClient();
    const t = new StubTransport();
    c.attach(t);
    const p = c.hello("controller");
    c.handleData(
      `{"type": "ACK", "req": ${t.lastReq()}, "session": 1, "role": "controller", "version": 1}\n`,
    );
    const ack = await p;
    expect(ack.type).toBe("ACK");
    expect(c.transcript).toHaveLength(1);
  });

  it("rejects a request answered with ERROR", async () => {
    const c = new GatewayClient();
    const t = new StubTransport();
    c.attach(t);
    const p = c.request({ type: "PAUSE" });
    c.handleData(`{"type": "ERROR", "req": ${t.lastReq()}, "error": "controller required"}\n`);
    await expect(p).rejects.toThrow("controller required");
  });

  it("reassembles lines split across stream chunks", async () => {
    const c = new GatewayClient();
    const t = new StubTransport();
    c.attach(t);
    const seen: string[] = [];
    c.onEvent = (m) => seen.push(m.type);
    const p = c.snapshot();
    const req = t.lastReq();
    const frame =
      `{"type": "PIR", "t_us": 1, "pir_id": 0, "active": true}\n` +
      `{"type": "ACK", "req": ${req}}\n`;
    c.handleData(frame.slice(0, 20));
    c.handleData(frame.slice(20, 41));
    c.handleData(frame.slice(41));
    await p;
    expect(seen).toEqual(["PIR"]);
  });

  it("flags a version mismatch as a blocking condition", () => {
    const c = new GatewayClient();
    c.attach(new StubTransport());
    c.handleData('{"type": "ERROR", "req": null, "error": "protocol version 9 unsupported (want 1)"}\n');
    expect(c.versionMismatch).toMatch(/version 9/);
  });

  it("fails pending requests when the transport drops", async () => {
    const c = new GatewayClient();
    c.attach(new StubTransport());
    const p = c.request({ type: "RESUME" });
    c.detach();
    await expect(p).rejects.toThrow("connection lost");
    await expect(c.request({ type: "PAUSE" })).rejects.toThrow("not connected");
  });
});

describe("reconnect backoff", () => {
  it("doubles up to the cap", () => {
    expect([0, 1, 2, 3, 4, 5, 6].map((a) => backoffDelay(a))).toEqual([
      500, 1000, 2000, 4000, 8000, 10000, 10000,
    ]);
  });

  it("retries with growing delays until open succeeds", async () => {
    const delays: number[] = [];
    let attempts = 0;
    const c = new GatewayClient();
    const r = new Reconnector(
      c,
      async () => {
        attempts += 1;
        if (attempts < 4) throw new Error("refused");
        return new StubTransport();
      },
      { setTimer: (fn, ms) => (delays.push(ms), fn(), null) },
    );
    await r.start();
    expect(attempts).toBe(4);
    expect(delays).toEqual([500, 1000, 2000]);
    expect(c.connected).toBe(true);
  });

  it("gives up permanently on a version mismatch", async () => {
    const c = new GatewayClient();
    c.attach(new StubTransport());
    c.handleData('{"type": "ERROR", "req": null, "error": "protocol version 9 unsupported (want 1)"}\n');
    let attempts = 0;
    const r = new Reconnector(c, async () => {
      attempts += 1;
      throw new Error("nope");
    });
    await r.onDrop();
    expect(attempts).toBe(0);
  });
});
