/** Trainer configuration and defaults. */

export type Backbone = 'small_cnn' | 'resnet50';
export type Regime = 'small_data' | 'normal_data';

export interface TrainerConfig {
  numClasses: number;          // C; the model emits C+1 scores (0 = background)
  backbone: Backbone;
  regime: Regime;
  learningRate: number;        // initial Adam learning rate
  lrDecayFactor: number;       // applied once during training
  maxSteps: number;
  batchSize: number;
  seed: number;
  /** Input rasters are 300x300; the backbone downsamples to this side first.
   * Pure-JS CPU training dictates a small default. */
  inputSize: number;
  /** Fraction of small_data samples carved out for early-stopping validation. */
  validationFraction: number;
  /** Steps between validation evaluations. */
  evalEvery: number;
}

export const DEFAULTS: TrainerConfig = {
  numClasses: 1,
  backbone: 'small_cnn',
  regime: 'small_data',
  learningRate: 1e-4,
  lrDecayFactor: 10,
  maxSteps: 1000,
  batchSize: 32,
  seed: 0,
  inputSize: 16,
  validationFraction: 0.2,
  evalEvery: 25,
};

export class DataError extends Error {}
export class ConfigError extends Error {}

export function makeConfig(overrides: Partial<TrainerConfig>): TrainerConfig {
  const cfg = { ...DEFAULTS, ...overrides };
  if (cfg.numClasses < 1) throw new ConfigError(`numClasses must be >= 1, got ${cfg.numClasses}`);
  if (cfg.batchSize < 1) throw new ConfigError(`batchSize must be >= 1, got ${cfg.batchSize}`);
  if (cfg.backbone === 'resnet50') {
    throw new ConfigError(
      'resnet50 requires pretrained weights that are not bundled; use small_cnn',
    );
  }
  if (cfg.backbone !== 'small_cnn') throw new ConfigError(`unknown backbone ${cfg.backbone}`);
  if (cfg.regime !== 'small_data' && cfg.regime !== 'normal_data') {
    throw new ConfigError(`unknown regime ${cfg.regime}`);
  }
  return cfg;
}

/** Deterministic 32-bit RNG (mulberry32); tfjs has no global seed. */
export function seededRandom(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s + 0x6d2b79f5) >>> 0;
    let t = s;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function shuffled<T>(items: T[], rand: () => number): T[] {
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}
