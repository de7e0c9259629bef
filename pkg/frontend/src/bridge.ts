/**
 * Dev server: serves the static client and bridges browser WebSockets to
 * the gateway's plain TCP socket, one TCP connection per WebSocket, no
 * multiplexing. Frames pass through untouched in both directions, so the
 * browser speaks the exact wire protocol.
 *
 *   node dist/bridge.js [--http 8080] [--gateway 127.0.0.1:9910]
 */
import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { WebSocket, WebSocketServer } from "ws";

const MIME: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".map": "application/json",
};

export interface BridgeHandle {
  port: number;
  close(): Promise<void>;
}

export function startBridge(
  gatewayHost: string,
  gatewayPort: number,
  httpPort = 8080,
  staticRoots?: string[],
): Promise<BridgeHandle> {
  const here = path.dirname(fileURLToPath(import.meta.url));
  const roots = staticRoots ?? [path.join(here, "..", "public"), here];

  const server = http.createServer((req, res) => {
    const url = (req.url ?? "/").split("?")[0]!;
    const rel = url === "/" ? "index.html" : url.slice(1);
    for (const root of roots) {
      const file = path.join(root, rel);
      if (!file.startsWith(root) || !fs.existsSync(file) || !fs.statSync(file).isFile()) {
        continue;
      }
      res.writeHead(200, {
        "content-type": MIME[path.extname(file)] ?? "application/octet-stream",
      });
      fs.createReadStream(file).pipe(res);
      return;
    }
    res.writeHead(404).end("not found");
  });

  const wss = new WebSocketServer({ server, path: "/gateway" });
  wss.on("connection", (ws: WebSocket) => {
    const tcp = net.createConnection(gatewayPort, gatewayHost);
    tcp.setNoDelay(true);
    ws.on("message", (data) => tcp.write(data.toString()));
    // TCP frames can split lines; the client reassembles, just forward
    tcp.on("data", (chunk) => {
      if (ws.readyState === WebSocket.OPEN) ws.send(chunk.toString("utf-8"));
    });
    const drop = () => {
      tcp.destroy();
      ws.close();
    };
    tcp.on("close", drop);
    tcp.on("error", drop);
    ws.on("close", () => tcp.destroy());
    ws.on("error", () => tcp.destroy());
  });

  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(httpPort, "127.0.0.1", () => {
      const addr = server.address() as net.AddressInfo;
      resolve({
        port: addr.port,
        close: () =>
          new Promise((res) => {
            wss.clients.forEach((c) => c.terminate());
            wss.close(() => server.close(() => res()));
          }),
      });
    });
  });
}

function cliArg(name: string, fallback: string): string {
  const i = process.argv.indexOf(`--${name}`);
  return i >= 0 && process.argv[i + 1] ? process.argv[i + 1]! : fallback;
}

const isMain =
  process.argv[1] && path.resolve(process.argv[1]) === fileURLToPath(import.meta.url);
if (isMain) {
  const [gh, gp] = cliArg("gateway", "127.0.0.1:9910").split(":");
  startBridge(gh || "127.0.0.1", Number(gp), Number(cliArg("http", "8080"))).then(
    (h) => console.log(`cocos-ui on http://127.0.0.1:${h.port} -> gateway ${gh}:${gp}`),
  );
}
