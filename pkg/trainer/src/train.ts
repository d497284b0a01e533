/** Training loop: Adam, one lr decay, small_data early stopping. */

import * as tf from '@tensorflow/tfjs';

import { seededRandom, shuffled, TrainerConfig } from './config';
import { Dataset, oneHot } from './data';
import { buildSmallCnn, forwardLogits } from './model';

export interface TrainReport {
  steps: number;
  earlyStopped: boolean;
  lrDecayStep: number | null;
  finalTrainLoss: number;
  validationLosses: number[];
  heldOutAccuracy: number | null; // normal_data: accuracy on split B
}

export interface TrainResult {
  model: tf.LayersModel;
  report: TrainReport;
}

// Early stopping: validation loss exceeding its running minimum by this
// relative margin for this many consecutive evaluations ends training.
const EARLY_STOP_MARGIN = 0.05;
const EARLY_STOP_PATIENCE = 3;
// Without early stopping the learning rate drops once at this point.
const LR_DECAY_AT = 0.75;

function crossEntropy(labels: tf.Tensor2D, logits: tf.Tensor2D): tf.Scalar {
  return tf.tidy(() =>
    tf.losses.softmaxCrossEntropy(labels, logits).asScalar(),
  );
}

export function evaluateLoss(
  model: tf.LayersModel,
  xs: tf.Tensor4D,
  ys: tf.Tensor2D,
): number {
  return tf.tidy(() => crossEntropy(ys, forwardLogits(model, xs)).dataSync()[0]);
}

export function evaluateAccuracy(
  model: tf.LayersModel,
  xs: tf.Tensor4D,
  labels: number[],
): number {
  return tf.tidy(() => {
    const pred = forwardLogits(model, xs).argMax(-1).dataSync();
    let hits = 0;
    for (let i = 0; i < labels.length; i++) if (pred[i] === labels[i]) hits++;
    return hits / labels.length;
  });
}

/** Split indices deterministically into train/validation parts. */
function validationSplit(
  n: number,
  fraction: number,
  rand: () => number,
): { train: number[]; val: number[] } {
  const order = shuffled([...Array(n).keys()], rand);
  const nVal = Math.max(1, Math.floor(n * fraction));
  return { train: order.slice(nVal), val: order.slice(0, nVal) };
}

function gatherBatch(
  ds: Dataset,
  ys: tf.Tensor2D,
  indices: number[],
): { x: tf.Tensor4D; y: tf.Tensor2D } {
  const idx = tf.tensor1d(indices, 'int32');
  const x = tf.gather(ds.xs, idx) as tf.Tensor4D;
  const y = tf.gather(ys, idx) as tf.Tensor2D;
  idx.dispose();
  return { x, y };
}

/**
 * Train the scorer on one dataset.
 *
 * small_data: a validation fraction is carved out of `train` for early
 * stopping. normal_data: `train` is split A and `heldOut` must be split B,
 * on which the final accuracy is reported.
 */
export async function train(
  cfg: TrainerConfig,
  trainSet: Dataset,
  heldOut?: Dataset,
): Promise<TrainResult> {
  const model = buildSmallCnn(cfg);
  const optimizer = tf.train.adam(cfg.learningRate);
  const rand = seededRandom(cfg.seed);
  const ys = oneHot(trainSet.labels, cfg.numClasses);

  let trainIdx = [...Array(trainSet.labels.length).keys()];
  let valIdx: number[] = [];
  if (cfg.regime === 'small_data') {
    ({ train: trainIdx, val: valIdx } = validationSplit(
      trainSet.labels.length,
      cfg.validationFraction,
      rand,
    ));
  }
  const valBatch = valIdx.length ? gatherBatch(trainSet, ys, valIdx) : null;

  const report: TrainReport = {
    steps: 0,
    earlyStopped: false,
    lrDecayStep: null,
    finalTrainLoss: NaN,
    validationLosses: [],
    heldOutAccuracy: null,
  };

  let order: number[] = [];
  let cursor = 0;
  let bestValLoss = Infinity;
  let badEvals = 0;

  for (let step = 1; step <= cfg.maxSteps; step++) {
    if (cursor + cfg.batchSize > order.length) {
      order = shuffled(trainIdx, rand);
      cursor = 0;
    }
    const batchIdx = order.slice(cursor, cursor + cfg.batchSize);
    cursor += cfg.batchSize;
    const { x, y } = gatherBatch(trainSet, ys, batchIdx);
    const loss = optimizer.minimize(
      () => crossEntropy(y, forwardLogits(model, x, true)),
      true,
    )!;
    report.finalTrainLoss = loss.dataSync()[0];
    loss.dispose();
    x.dispose();
    y.dispose();
    report.steps = step;

    if (report.lrDecayStep === null && step >= Math.floor(cfg.maxSteps * LR_DECAY_AT)) {
      (optimizer as unknown as { learningRate: number }).learningRate =
        cfg.learningRate / cfg.lrDecayFactor;
      report.lrDecayStep = step;
    }

    if (valBatch && step % cfg.evalEvery === 0) {
      const valLoss = evaluateLoss(model, valBatch.x, valBatch.y);
      report.validationLosses.push(valLoss);
      if (valLoss < bestValLoss) {
        bestValLoss = valLoss;
        badEvals = 0;
      } else if (valLoss > bestValLoss * (1 + EARLY_STOP_MARGIN)) {
        badEvals += 1;
        if (badEvals >= EARLY_STOP_PATIENCE) {
          report.earlyStopped = true;
          break;
        }
      } else {
        badEvals = 0;
      }
    }
    // Yield to the event loop occasionally (keeps serve/test processes live).
    if (step % 50 === 0) await tf.nextFrame();
  }

  if (heldOut) {
    report.heldOutAccuracy = evaluateAccuracy(model, heldOut.xs, heldOut.labels);
  } else if (valBatch) {
    report.heldOutAccuracy = evaluateAccuracy(
      model,
      valBatch.x,
      valIdx.map((i) => trainSet.labels[i]),
    );
  }

  valBatch?.x.dispose();
  valBatch?.y.dispose();
  ys.dispose();
  optimizer.dispose();
  return { model, report };
}
