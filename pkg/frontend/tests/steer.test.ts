import { describe, expect, it } from "vitest";

import { GatewayClient, Transport } from "../src/client.js";
import { WalkerSteering } from "../src/steer.js";

/** Transport that ACKs everything immediately, handing out walker id 5. */
function autoAckClient(): { client: GatewayClient; sent: unknown[] } {
  const client = new GatewayClient();
  const sent: unknown[] = [];
  const t: Transport = {
    send(line: string) {
      const cmd = JSON.parse(line);
      sent.push(cmd);
      queueMicrotask(() =>
        client.handleData(
          JSON.stringify({ type: "ACK", req: cmd.req, walker_id: 5 }) + "\n",
        ),
      );
    },
    close() {},
  };
  client.attach(t);
  return { client, sent };
}

describe("walker steering", () => {
  it("first click spawns, later clicks append waypoints", async () => {
    const { client, sent } = autoAckClient();
    const s = new WalkerSteering(client, 1.0);
    await s.click(1.5, 0.9);
    await s.click(1.5, 6.0);
    await s.click(2.1, 9.0);
    expect(sent.map((c: any) => c.type)).toEqual([
      "SPAWN_WALKER",
      "MOVE_WALKER",
      "MOVE_WALKER",
    ]);
    const spawn = sent[0] as any;
    expect(spawn.path).toEqual([[1.5, 0.9]]);
    const move = sent[2] as any;
    expect(move.walker_id).toBe(5);
    expect(move.x).toBeCloseTo(2.1);
  });

  it("serializes a double click so MOVE never races SPAWN", async () => {
    const { client, sent } = autoAckClient();
    const s = new WalkerSteering(client);
    const [a, b] = [s.click(1.0, 1.0), s.click(1.0, 2.0)];
    await Promise.all([a, b]);
    expect((sent[0] as any).type).toBe("SPAWN_WALKER");
    expect((sent[1] as any).type).toBe("MOVE_WALKER");
    expect((sent[1] as any).walker_id).toBe(5);
  });

  it("remove forgets the walker and a new click spawns again", async () => {
    const { client, sent } = autoAckClient();
    const s = new WalkerSteering(client);
    await s.click(1.0, 1.0);
    await s.remove();
    expect(s.activeWalker).toBeNull();
    await s.click(1.0, 2.0);
    expect(sent.map((c: any) => c.type)).toEqual([
      "SPAWN_WALKER",
      "REMOVE_WALKER",
      "SPAWN_WALKER",
    ]);
  });

  it("rounds coordinates instead of leaking float noise onto the wire", async () => {
    const { client, sent } = autoAckClient();
    const s = new WalkerSteering(client);
    await s.click(1.0000001234, 2.0000009);
    expect((sent[0] as any).path).toEqual([[1, 2]]);
  });
});
