/** Wire protocol v1 server: newline-delimited JSON over stdio or TCP.
 *
 * scorer -> engine on connect:  {"version": 1, "num_classes": C}
 * engine -> scorer per query:   {"id": n, "w": W, "h": H, "rgb": base64 RGB8}
 * scorer -> engine per query:   {"id": n, "scores": [C+1 floats]}
 *                                or {"id": n, "error": "message"}
 *
 * Requests are batched internally (up to maxBatch per prediction call);
 * responses preserve ids and are emitted in request order.
 */

import * as net from 'net';
import * as readline from 'readline';
import * as tf from '@tensorflow/tfjs';

import { CheckpointMeta, forwardLogits } from './model';

export const PROTOCOL_VERSION = 1;
export const DEFAULT_MAX_BATCH = 64;

type WriteFn = (line: string) => void;

interface Pending {
  id: unknown;
  pixels: tf.Tensor3D | null;
  error: string | null;
  write: WriteFn;
}

export class ScorerServer {
  private queue: Pending[] = [];
  private flushScheduled = false;

  constructor(
    private readonly model: tf.LayersModel,
    private readonly meta: CheckpointMeta,
    private readonly maxBatch: number = DEFAULT_MAX_BATCH,
  ) {}

  handshakeLine(): string {
    return JSON.stringify({ version: PROTOCOL_VERSION, num_classes: this.meta.numClasses });
  }

  /** Parse one request line and queue it; responses go through `write`. */
  submit(line: string, write: WriteFn): void {
    if (!line.trim()) return;
    let id: unknown = null;
    let pixels: tf.Tensor3D | null = null;
    let error: string | null = null;
    try {
      const msg = JSON.parse(line);
      id = msg.id ?? null;
      const { w, h, rgb } = msg;
      if (!Number.isInteger(w) || !Number.isInteger(h) || w < 1 || h < 1) {
        throw new Error(`bad dimensions w=${w} h=${h}`);
      }
      if (typeof rgb !== 'string') throw new Error('missing rgb payload');
      const bytes = Buffer.from(rgb, 'base64');
      if (bytes.length !== w * h * 3) {
        throw new Error(`rgb payload is ${bytes.length} bytes, expected ${w * h * 3}`);
      }
      const data = new Float32Array(bytes.length);
      for (let i = 0; i < bytes.length; i++) data[i] = bytes[i] / 255;
      pixels = tf.tidy(() =>
        tf.image.resizeBilinear(
          tf.tensor3d(data, [h, w, 3]),
          [this.meta.inputSize, this.meta.inputSize],
        ),
      );
    } catch (e) {
      error = e instanceof Error ? e.message : String(e);
    }
    this.queue.push({ id, pixels, error, write });
    if (!this.flushScheduled) {
      this.flushScheduled = true;
      setImmediate(() => this.flush());
    }
  }

  private flush(): void {
    this.flushScheduled = false;
    while (this.queue.length > 0) {
      const chunk = this.queue.splice(0, this.maxBatch);
      const valid = chunk.filter((p) => p.pixels !== null);
      let scores: Float32Array | null = null;
      if (valid.length > 0) {
        scores = tf.tidy(() => {
          const batch = tf.stack(valid.map((p) => p.pixels!)) as tf.Tensor4D;
          return tf.softmax(forwardLogits(this.model, batch)).dataSync() as Float32Array;
        });
      }
      let row = 0;
      const width = this.meta.numClasses + 1;
      for (const pending of chunk) {
        if (pending.error !== null || pending.pixels === null) {
          pending.write(JSON.stringify({ id: pending.id, error: pending.error ?? 'bad request' }));
          continue;
        }
        const vec = Array.from(scores!.subarray(row * width, (row + 1) * width));
        row += 1;
        pending.pixels.dispose();
        pending.write(JSON.stringify({ id: pending.id, scores: vec }));
      }
    }
  }
}

export function serveStdio(server: ScorerServer): void {
  const write: WriteFn = (line) => process.stdout.write(line + '\n');
  write(server.handshakeLine());
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on('line', (line) => server.submit(line, write));
  rl.on('close', () => process.exit(0));
}

export function serveTcp(server: ScorerServer, port: number, host = '127.0.0.1'): net.Server {
  const srv = net.createServer((socket) => {
    const write: WriteFn = (line) => socket.write(line + '\n');
    write(server.handshakeLine());
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on('line', (line) => server.submit(line, write));
    socket.on('error', () => socket.destroy());
  });
  srv.listen(port, host, () => {
    const addr = srv.address() as net.AddressInfo;
    process.stderr.write(`scorer listening on ${host}:${addr.port}\n`);
  });
  return srv;
}
