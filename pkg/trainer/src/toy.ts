/** Synthetic "context toy" data: the surroundings alone determine the label.
 *
 * Each 300x300 crop is filled with a class-specific color plus noise and the
 * masked box region is overwritten with the engine's mid-gray fill, matching
 * the export-directory contract. Bayes accuracy on this task is 1.0.
 */

import * as fs from 'fs';
import * as path from 'path';
import { PNG } from 'pngjs';

import { seededRandom } from './config';

const PALETTE: Array<[number, number, number]> = [
  [45, 45, 45],     // background contexts
  [220, 60, 60],
  [60, 200, 80],
  [70, 90, 230],
  [230, 210, 60],
  [200, 70, 200],
];
const FILL = 128;
const SIZE = 300;

export function writeToyExport(
  dir: string,
  numClasses: number,
  perClass: number,
  seed: number,
  shuffleLabels = false,
): string {
  if (numClasses + 1 > PALETTE.length) {
    throw new Error(`toy palette supports at most ${PALETTE.length - 1} classes`);
  }
  const rand = seededRandom(seed);
  const imageDir = path.join(dir, 'images');
  fs.mkdirSync(imageDir, { recursive: true });

  const entries: Array<{ name: string; label: number }> = [];
  for (let label = 0; label <= numClasses; label++) {
    for (let i = 0; i < perClass; i++) {
      const png = new PNG({ width: SIZE, height: SIZE });
      const color = PALETTE[label];
      for (let p = 0; p < SIZE * SIZE; p++) {
        for (let c = 0; c < 3; c++) {
          const noise = (rand() - 0.5) * 60;
          png.data[p * 4 + c] = Math.max(0, Math.min(255, Math.round(color[c] + noise)));
        }
        png.data[p * 4 + 3] = 255;
      }
      // Masked source-box region: position and size vary like real crops.
      const bw = Math.floor(SIZE * (0.25 + rand() * 0.4));
      const bh = Math.floor(SIZE * (0.25 + rand() * 0.4));
      const bx = Math.floor(rand() * (SIZE - bw));
      const by = Math.floor(rand() * (SIZE - bh));
      for (let y = by; y < by + bh; y++) {
        for (let x = bx; x < bx + bw; x++) {
          const p = y * SIZE + x;
          png.data[p * 4] = FILL;
          png.data[p * 4 + 1] = FILL;
          png.data[p * 4 + 2] = FILL;
        }
      }
      const name = `toy_${label}_${i}.png`;
      fs.writeFileSync(path.join(imageDir, name), PNG.sync.write(png));
      entries.push({ name, label });
    }
  }

  let labels = entries.map((e) => e.label);
  if (shuffleLabels) {
    // Derangement-ish shuffle: destroys the color-label association.
    const rand2 = seededRandom(seed + 999);
    for (let i = labels.length - 1; i > 0; i--) {
      const j = Math.floor(rand2() * (i + 1));
      [labels[i], labels[j]] = [labels[j], labels[i]];
    }
  }
  const lines = ['path,label'];
  entries.forEach((e, i) => lines.push(`images/${e.name},${labels[i]}`));
  const csvPath = path.join(dir, 'labels.csv');
  fs.writeFileSync(csvPath, lines.join('\n') + '\n');
  return csvPath;
}
