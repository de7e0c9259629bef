/**
 * Browser entry point: wires the gateway client to a canvas floor view.
 * All state transitions are driven by protocol messages and clicks; the
 * render loop just draws whatever the view model holds.
 */
import { GatewayClient, Reconnector, Transport } from "./client.js";
import { fitViewport, heatCells, pxToWorld, worldToPx } from "./heatmap.js";
import { ViewModel } from "./state.js";
import { WalkerSteering } from "./steer.js";

const canvas = document.getElementById("floor") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const roleSel = document.getElementById("role") as HTMLSelectElement;
const ledBtn = document.getElementById("led") as HTMLButtonElement;
const statusEl = document.getElementById("status")!;

const vm = new ViewModel();
const client = new GatewayClient();
client.onEvent = (msg) => vm.apply(msg);

let steering: WalkerSteering | null = null;

function openSocket(): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(`ws://${location.host}/gateway`);
    ws.onopen = () => {
      const t: Transport = { send: (l) => ws.send(l), close: () => ws.close() };
      ws.onmessage = (ev) => client.handleData(String(ev.data));
      ws.onclose = () => {
        vm.connection = "down";
        reconnector.onDrop().then(handshake);
      };
      resolve(t);
    };
    ws.onerror = () => reject(new Error("socket error"));
  });
}

const reconnector = new Reconnector(client, openSocket);

async function handshake(): Promise<void> {
  if (!client.connected) return;
  const role = roleSel.value === "controller" ? "controller" : "observer";
  try {
    await client.hello(role);
    await client.subscribe(["floor", "tracks", "pir", "actuations"]);
    const snap = await client.snapshot();
    vm.apply(snap);
    vm.connection = "up";
    steering = role === "controller" ? new WalkerSteering(client) : null;
  } catch (err) {
    vm.connection = client.versionMismatch ? "version-mismatch" : "down";
    if (!client.versionMismatch) throw err;
  }
}

canvas.addEventListener("click", (ev) => {
  if (!steering || !vm.floor) return;
  const vp = fitViewport(vm.floor, canvas.width, canvas.height);
  const rect = canvas.getBoundingClientRect();
  const [x, y] = pxToWorld(vp, ev.clientX - rect.left, ev.clientY - rect.top);
  const w = vm.floor.tiles_x * vm.floor.tile_side_m;
  const h = vm.floor.tiles_y * vm.floor.tile_side_m;
  if (x < 0 || y < 0 || x > w || y > h) return;
  steering.click(x, y).catch((e) => console.warn("steer:", e));
});

ledBtn.addEventListener("click", async () => {
  // light the node nearest the newest confirmed track, or node 0
  const tracks = vm.confirmedTracks();
  let nodeId = 0;
  if (tracks.length && vm.floor) {
    const t = tracks[tracks.length - 1]!;
    let best = Infinity;
    for (const n of vm.floor.nodes) {
      if (!n.actuator) continue;
      const d = (n.x - t.x) ** 2 + (n.y - t.y) ** 2;
      if (d < best) {
        best = d;
        nodeId = n.node_id;
      }
    }
  }
  const lit = vm.nodeLeds.get(nodeId)?.some((v) => v > 0);
  await client
    .request({ type: "ACTUATE", node_id: nodeId, led: lit ? [0, 0, 0] : [0, 3, 0] })
    .catch((e) => console.warn("actuate:", e));
});

function draw(): void {
  requestAnimationFrame(draw);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  statusEl.textContent =
    vm.connection + (vm.lastTUs ? ` · t=${(vm.lastTUs / 1e6).toFixed(1)}s` : "");
  banner.style.display = vm.connection === "version-mismatch" ? "block" : "none";
  if (vm.connection === "version-mismatch") {
    banner.textContent = client.versionMismatch ?? "protocol version mismatch";
  }
  if (!vm.floor) return;

  const vp = fitViewport(vm.floor, canvas.width, canvas.height);
  const side = vm.floor.tile_side_m * vp.scale;

  // tile grid
  ctx.strokeStyle = "#232a33";
  for (let tx = 0; tx < vm.floor.tiles_x; tx++) {
    for (let ty = 0; ty < vm.floor.tiles_y; ty++) {
      const [px, py] = worldToPx(vp, tx * vm.floor.tile_side_m, ty * vm.floor.tile_side_m);
      ctx.strokeRect(px, py, side, side);
    }
  }

  // PIR lamps along the wall
  vm.floor.pir_zones.forEach((zone, pid) => {
    const [x0, y0, , y1] = zone;
    const [px, py] = worldToPx(vp, x0, (y0 + y1) / 2);
    ctx.fillStyle = vm.pirs.get(pid) ? "#ffd75e" : "#3a3f46";
    ctx.beginPath();
    ctx.arc(px - 12, py, 4, 0, Math.PI * 2);
    ctx.fill();
  });

  // sensor heat dots
  for (const cell of heatCells(vm.floor, vm.sensors, vp)) {
    const [r, g, b] = cell.rgb;
    ctx.fillStyle = `rgb(${r},${g},${b})`;
    ctx.beginPath();
    ctx.arc(cell.px, cell.py, 3 + cell.intensity * 6, 0, Math.PI * 2);
    ctx.fill();
  }

  // node LEDs
  for (const n of vm.floor.nodes) {
    const led = vm.nodeLeds.get(n.node_id);
    if (!led || !led.some((v) => v > 0)) continue;
    const [px, py] = worldToPx(vp, n.x, n.y);
    ctx.strokeStyle = `rgb(${led[0] * 60},${led[1] * 60},${led[2] * 60})`;
    ctx.lineWidth = 2;
    ctx.strokeRect(px - 8, py - 8, 16, 16);
    ctx.lineWidth = 1;
  }

  // tracks with trails
  for (const t of vm.tracks.values()) {
    ctx.strokeStyle = t.state === "confirmed" ? "#6cf06c" : "#6a7f6a";
    ctx.beginPath();
    t.trail.forEach(([x, y], i) => {
      const [px, py] = worldToPx(vp, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
    const [px, py] = worldToPx(vp, t.x, t.y);
    ctx.fillStyle = t.state === "confirmed" ? "#6cf06c" : "#6a7f6a";
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, Math.PI * 2);
    ctx.fill();
  }

  // ground-truth walkers (controller only; observers never receive these)
  for (const w of vm.walkers.values()) {
    if (w.x === null || w.y === null) continue;
    const [px, py] = worldToPx(vp, w.x, w.y);
    ctx.strokeStyle = "#e0e0e0";
    ctx.beginPath();
    ctx.arc(px, py, 8, 0, Math.PI * 2);
    ctx.stroke();
  }
}

roleSel.addEventListener("change", () => location.reload());

reconnector.start().then(handshake);
draw();
