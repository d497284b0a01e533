/** CLI: serve a trained scorer over the wire protocol.
 *
 * Usage:
 *   node dist/serve_cli.js --model <checkpoint_dir> [--transport stdio|tcp]
 *     [--port 8731] [--max-batch 64]
 *
 * For protocol testing without a checkpoint, an untrained model can be
 * served with: --init --num-classes C [--input-size 16] [--seed 0]
 */

import * as tf from '@tensorflow/tfjs';

import { makeConfig } from './config';
import { buildSmallCnn, CheckpointMeta, loadCheckpoint } from './model';
import { DEFAULT_MAX_BATCH, ScorerServer, serveStdio, serveTcp } from './serve';

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith('--')) throw new Error(`unexpected argument ${argv[i]}`);
    const key = argv[i].slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith('--')) {
      args.set(key, argv[i + 1]);
      i++;
    } else {
      args.set(key, '');
    }
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  let model: tf.LayersModel;
  let meta: CheckpointMeta;
  if (args.has('init')) {
    const cfg = makeConfig({
      numClasses: Number(args.get('num-classes') ?? '1'),
      inputSize: Number(args.get('input-size') ?? '16'),
      seed: Number(args.get('seed') ?? '0'),
    });
    model = buildSmallCnn(cfg);
    meta = {
      version: 1,
      numClasses: cfg.numClasses,
      inputSize: cfg.inputSize,
      backbone: cfg.backbone,
    };
  } else {
    const dir = args.get('model');
    if (!dir) throw new Error('--model <checkpoint_dir> is required (or --init)');
    ({ model, meta } = await loadCheckpoint(dir));
  }

  // Warm up so the first request does not pay kernel-compilation latency.
  tf.tidy(() => {
    (model.apply(tf.zeros([1, meta.inputSize, meta.inputSize, 3])) as tf.Tensor).dataSync();
  });

  const server = new ScorerServer(model, meta, Number(args.get('max-batch') ?? DEFAULT_MAX_BATCH));
  const transport = args.get('transport') ?? 'stdio';
  if (transport === 'tcp') {
    serveTcp(server, Number(args.get('port') ?? '8731'));
  } else if (transport === 'stdio') {
    serveStdio(server);
  } else {
    throw new Error(`unknown transport ${transport}`);
  }
}

main().catch((e) => {
  process.stderr.write(`error: ${e instanceof Error ? e.message : e}\n`);
  process.exit(1);
});
