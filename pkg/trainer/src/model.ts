/** Small CNN backbone and checkpoint (de)serialization. */

import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

import { TrainerConfig } from './config';

export interface CheckpointMeta {
  version: number;
  numClasses: number;
  inputSize: number;
  backbone: string;
}

/** Four conv blocks, global average pooling, linear head (logits). */
export function buildSmallCnn(cfg: TrainerConfig): tf.LayersModel {
  const init = (offset: number) => tf.initializers.glorotUniform({ seed: cfg.seed + offset });
  const filters = [4, 8, 8, 8];
  const model = tf.sequential();
  model.add(
    tf.layers.conv2d({
      filters: filters[0], kernelSize: 3, strides: 2, activation: 'relu',
      inputShape: [cfg.inputSize, cfg.inputSize, 3], kernelInitializer: init(1),
    }),
  );
  model.add(
    tf.layers.conv2d({
      filters: filters[1], kernelSize: 3, strides: 2, activation: 'relu',
      kernelInitializer: init(2),
    }),
  );
  model.add(
    tf.layers.conv2d({
      filters: filters[2], kernelSize: 3, strides: 1, padding: 'same', activation: 'relu',
      kernelInitializer: init(3),
    }),
  );
  model.add(
    tf.layers.conv2d({
      filters: filters[3], kernelSize: 3, strides: 1, padding: 'same', activation: 'relu',
      kernelInitializer: init(4),
    }),
  );
  model.add(tf.layers.globalAveragePooling2d({}));
  model.add(tf.layers.dense({ units: cfg.numClasses + 1, kernelInitializer: init(5) }));
  return model;
}

/** Forward pass on [0,1] rasters already at the model's input size.
 * Inputs are centered to [-0.5, 0.5]; zero-mean color features converge much
 * faster at the fixed 1e-4 learning rate. */
export function forwardLogits(
  model: tf.LayersModel,
  images01: tf.Tensor4D,
  training = false,
): tf.Tensor2D {
  return model.apply(tf.sub(images01, 0.5), { training }) as tf.Tensor2D;
}

/** Class probabilities for a batch of [0,1] RGB rasters of any resolution. */
export function predictProbs(
  model: tf.LayersModel,
  images: tf.Tensor4D,
  inputSize: number,
): tf.Tensor2D {
  return tf.tidy(() => {
    const resized =
      images.shape[1] === inputSize && images.shape[2] === inputSize
        ? images
        : tf.image.resizeBilinear(images, [inputSize, inputSize]);
    return tf.softmax(forwardLogits(model, resized as tf.Tensor4D));
  });
}

export async function saveCheckpoint(
  model: tf.LayersModel,
  meta: CheckpointMeta,
  dir: string,
): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      fs.writeFileSync(
        path.join(dir, 'model.json'),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
        }),
      );
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(artifacts.weightData as ArrayBuffer));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
    }),
  );
  fs.writeFileSync(path.join(dir, 'meta.json'), JSON.stringify(meta, null, 2));
}

export async function loadCheckpoint(
  dir: string,
): Promise<{ model: tf.LayersModel; meta: CheckpointMeta }> {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, 'meta.json'), 'utf-8')) as CheckpointMeta;
  const spec = JSON.parse(fs.readFileSync(path.join(dir, 'model.json'), 'utf-8'));
  const weightData = fs.readFileSync(path.join(dir, 'weights.bin'));
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: spec.modelTopology,
      weightSpecs: spec.weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  );
  return { model, meta };
}
