/**
 * Click-to-walk: the first click on the floor spawns a walker at that spot,
 * every further click appends a waypoint it strolls to at walking pace.
 */
import { GatewayClient } from "./client.js";

export class WalkerSteering {
  private walkerId: number | null = null;
  private inflight: Promise<unknown> = Promise.resolve();

  constructor(
    private client: GatewayClient,
    private speedMps = 1.0,
    private weightN = 800,
  ) {}

  get activeWalker(): number | null {
    return this.walkerId;
  }

  /** Handle a click at floor coordinates (metres). */
  click(x: number, y: number): Promise<number> {
    // serialize: a fast double click must not race SPAWN against MOVE
    const next = this.inflight.then(async () => {
      if (this.walkerId === null) {
        const ack: unknown = await this.client.request({
          type: "SPAWN_WALKER",
          path: [[round4(x), round4(y)]],
          speed_mps: this.speedMps,
          weight_n: this.weightN,
        });
        this.walkerId = (ack as { walker_id: number }).walker_id;
      } else {
        await this.client.request({
          type: "MOVE_WALKER",
          walker_id: this.walkerId,
          x: round4(x),
          y: round4(y),
          speed_mps: this.speedMps,
        });
      }
      return this.walkerId!;
    });
    this.inflight = next.catch(() => {});
    return next;
  }

  async remove(): Promise<void> {
    if (this.walkerId === null) return;
    const wid = this.walkerId;
    this.walkerId = null;
    await this.client.request({ type: "REMOVE_WALKER", walker_id: wid });
  }
}

function round4(v: number): number {
  return Math.round(v * 10_000) / 10_000;
}
