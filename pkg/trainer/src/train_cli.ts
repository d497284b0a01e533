/** CLI: train a context scorer from an engine export directory.
 *
 * Usage:
 *   node dist/train_cli.js --data <export_dir> --out <checkpoint_dir>
 *     [--regime small_data|normal_data] [--num-classes C] [--max-steps N]
 *     [--batch 32] [--seed 0] [--input-size 16]
 *
 * normal_data expects <export_dir>/split_a and <export_dir>/split_b as
 * produced by `ctxpaste export-context --regime normal_data`.
 */

import * as path from 'path';

import { makeConfig, TrainerConfig } from './config';
import { loadDataset } from './data';
import { saveCheckpoint } from './model';
import { train } from './train';

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith('--')) throw new Error(`unexpected argument ${argv[i]}`);
    args.set(argv[i].slice(2), argv[i + 1] ?? '');
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  const dataDir = args.get('data');
  const outDir = args.get('out');
  if (!dataDir || !outDir) {
    throw new Error('--data and --out are required');
  }
  const overrides: Partial<TrainerConfig> = {};
  if (args.has('regime')) overrides.regime = args.get('regime') as TrainerConfig['regime'];
  if (args.has('num-classes')) overrides.numClasses = Number(args.get('num-classes'));
  if (args.has('max-steps')) overrides.maxSteps = Number(args.get('max-steps'));
  if (args.has('batch')) overrides.batchSize = Number(args.get('batch'));
  if (args.has('seed')) overrides.seed = Number(args.get('seed'));
  if (args.has('input-size')) overrides.inputSize = Number(args.get('input-size'));

  let cfg = makeConfig(overrides);
  let trainSet;
  let heldOut;
  if (cfg.regime === 'normal_data') {
    trainSet = loadDataset(path.join(dataDir, 'split_a'), cfg.inputSize, args.has('num-classes') ? cfg.numClasses : undefined);
    heldOut = loadDataset(path.join(dataDir, 'split_b'), cfg.inputSize, trainSet.numClasses);
  } else {
    trainSet = loadDataset(dataDir, cfg.inputSize, args.has('num-classes') ? cfg.numClasses : undefined);
  }
  if (!args.has('num-classes')) {
    cfg = makeConfig({ ...overrides, numClasses: trainSet.numClasses });
  }

  process.stderr.write(
    `training ${cfg.backbone} on ${trainSet.labels.length} samples ` +
      `(C=${cfg.numClasses}, regime=${cfg.regime}, max ${cfg.maxSteps} steps)\n`,
  );
  const { model, report } = await train(cfg, trainSet, heldOut);
  await saveCheckpoint(
    model,
    {
      version: 1,
      numClasses: cfg.numClasses,
      inputSize: cfg.inputSize,
      backbone: cfg.backbone,
    },
    outDir,
  );
  process.stderr.write(`checkpoint written to ${outDir}\n`);
  process.stdout.write(JSON.stringify(report, null, 2) + '\n');
}

main().catch((e) => {
  process.stderr.write(`error: ${e instanceof Error ? e.message : e}\n`);
  process.exit(1);
});
