/** Loader for the engine's context-export directory: PNG crops + labels.csv. */

import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { PNG } from 'pngjs';

import { DataError } from './config';

export interface Sample {
  path: string;
  label: number;
}

export interface Dataset {
  xs: tf.Tensor4D;   // [n, size, size, 3] float32 in [0, 1]
  labels: number[];
  numClasses: number; // C (labels range over 0..C)
}

export function readLabelsCsv(exportDir: string): Sample[] {
  const csvPath = path.join(exportDir, 'labels.csv');
  if (!fs.existsSync(csvPath)) {
    throw new DataError(`no labels.csv in ${exportDir}`);
  }
  const lines = fs.readFileSync(csvPath, 'utf-8').trim().split(/\r?\n/);
  const samples: Sample[] = [];
  for (const [i, line] of lines.entries()) {
    if (i === 0 && line.toLowerCase().startsWith('path,')) continue;
    if (!line.trim()) continue;
    const comma = line.lastIndexOf(',');
    if (comma < 0) throw new DataError(`labels.csv line ${i + 1}: no label column`);
    const rel = line.slice(0, comma);
    const label = Number(line.slice(comma + 1));
    if (!Number.isInteger(label) || label < 0) {
      throw new DataError(`labels.csv line ${i + 1}: bad label ${line.slice(comma + 1)}`);
    }
    samples.push({ path: path.join(exportDir, rel), label });
  }
  if (samples.length === 0) throw new DataError(`labels.csv in ${exportDir} lists no samples`);
  return samples;
}

export function decodePng(filePath: string): { data: Float32Array; width: number; height: number } {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const out = new Float32Array(png.width * png.height * 3);
  for (let p = 0; p < png.width * png.height; p++) {
    out[p * 3] = png.data[p * 4] / 255;
    out[p * 3 + 1] = png.data[p * 4 + 1] / 255;
    out[p * 3 + 2] = png.data[p * 4 + 2] / 255;
  }
  return { data: out, width: png.width, height: png.height };
}

/** Load an export directory, downsampling every crop to inputSize. */
export function loadDataset(
  exportDir: string,
  inputSize: number,
  numClasses?: number,
): Dataset {
  const samples = readLabelsCsv(exportDir);
  const labels = samples.map((s) => s.label);
  const inferred = Math.max(...labels);
  const c = numClasses ?? Math.max(inferred, 1);
  for (const [i, label] of labels.entries()) {
    if (label > c) {
      throw new DataError(`sample ${i}: label ${label} out of range 0..${c}`);
    }
  }
  const tensors: tf.Tensor3D[] = [];
  for (const sample of samples) {
    const { data, width, height } = decodePng(sample.path);
    const small = tf.tidy(() => {
      const img = tf.tensor3d(data, [height, width, 3]);
      return tf.image.resizeBilinear(img, [inputSize, inputSize]);
    });
    tensors.push(small);
  }
  const xs = tf.stack(tensors) as tf.Tensor4D;
  tensors.forEach((t) => t.dispose());
  return { xs, labels, numClasses: c };
}

export function oneHot(labels: number[], numClasses: number): tf.Tensor2D {
  return tf.oneHot(tf.tensor1d(labels, 'int32'), numClasses + 1) as tf.Tensor2D;
}
