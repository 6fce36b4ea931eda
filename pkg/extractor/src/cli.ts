#!/usr/bin/env node
/**
 * combood-extract: hook a classifier's activation layers and export
 * extrema.npy / embeddings.npy / labels.npy / manifest.json for the
 * scoring toolkit.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import * as tf from '@tensorflow/tfjs';
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { extractFeatures, filterCorrect, findActivationLayers } from './extract.js';
import { loadModel } from './modelio.js';
import { readNpy, writeNpy } from './npy.js';

export interface RunOptions {
  model: string;
  data: string;
  labels: string;
  outDir: string;
  penultimateLayer?: string;
  batchSize: number;
  filter: boolean;
  filterEmbeddings: boolean;
  datasetId?: string;
  listLayers?: boolean;
}

export async function run(options: RunOptions): Promise<void> {
  const model = await loadModel(options.model);

  if (options.listLayers) {
    for (const layer of model.layers) {
      const hooked = findActivationLayers(model).includes(layer) ? '  [hooked]' : '';
      console.log(`${layer.name}  (${layer.getClassName()})${hooked}`);
    }
    return;
  }

  const dataset = readNpy(options.data);
  if (dataset.shape.length !== 2) {
    throw new Error(`expected a 2-D sample matrix in ${options.data}, got shape ${dataset.shape}`);
  }
  const labelArray = readNpy(options.labels);
  const labels = labelArray.data;
  const n = dataset.shape[0];
  if (labels.length !== n) {
    throw new Error(`${labels.length} labels for ${n} samples`);
  }

  const inputs = tf.tensor2d(new Float32Array(dataset.data), [n, dataset.shape[1]]);
  const extraction = await extractFeatures(model, inputs, {
    batchSize: options.batchSize,
    penultimateLayer: options.penultimateLayer,
  });
  inputs.dispose();

  const r = extraction.activationLayers.length;
  let extrema = extraction.extrema;
  let extremaRows = n;
  let embeddings = extraction.embeddings;
  let embeddingRows = n;
  let correct = 0;
  for (let i = 0; i < n; i++) {
    if (labels[i] === extraction.predictions[i]) correct++;
  }

  if (options.filter) {
    const filtered = filterCorrect(extraction.extrema, 2 * r, labels, extraction.predictions);
    extrema = filtered.filtered;
    extremaRows = filtered.kept;
    if (options.filterEmbeddings) {
      const fe = filterCorrect(
        extraction.embeddings,
        extraction.embeddingWidth,
        labels,
        extraction.predictions,
      );
      embeddings = fe.filtered;
      embeddingRows = fe.kept;
    }
  }

  fs.mkdirSync(options.outDir, { recursive: true });
  writeNpy(path.join(options.outDir, 'extrema.npy'), extrema, [extremaRows, 2 * r]);
  writeNpy(path.join(options.outDir, 'embeddings.npy'), embeddings, [
    embeddingRows,
    extraction.embeddingWidth,
  ]);
  writeNpy(path.join(options.outDir, 'labels.npy'), Float64Array.from(labels), [n]);

  const manifest = {
    model: options.model,
    activation_layers: extraction.activationLayers,
    r,
    dims: { extrema: 2 * r, embedding: extraction.embeddingWidth },
    counts: {
      total: n,
      correctly_predicted: correct,
      extrema_rows: extremaRows,
      embedding_rows: embeddingRows,
    },
    filter: { extrema: options.filter, embeddings: options.filter && options.filterEmbeddings },
    dataset: options.datasetId ?? options.data,
    batch_size: options.batchSize,
    files: ['extrema.npy', 'embeddings.npy', 'labels.npy'],
  };
  fs.writeFileSync(
    path.join(options.outDir, 'manifest.json'),
    JSON.stringify(manifest, null, 2) + '\n',
  );
  console.log(
    `hooked ${r} activation layers; wrote ${extremaRows}x${2 * r} extrema, ` +
      `${embeddingRows}x${extraction.embeddingWidth} embeddings -> ${options.outDir}`,
  );
}

export function parseArgs(argv: string[]): RunOptions {
  const parsed = yargs(argv)
    .usage('combood-extract --model <dir> --data <inputs.npy> --labels <labels.npy> --out-dir <dir>')
    .option('model', { type: 'string', demandOption: true, describe: 'model directory (model.json + weights.bin)' })
    .option('data', { type: 'string', demandOption: true, describe: 'input sample matrix (.npy, n x features)' })
    .option('labels', { type: 'string', demandOption: true, describe: 'label vector (.npy, length n)' })
    .option('out-dir', { type: 'string', demandOption: true, describe: 'output directory' })
    .option('penultimate-layer', { type: 'string', describe: 'layer whose output is the embedding (when the default head detection is ambiguous)' })
    .option('batch-size', { type: 'number', default: 128 })
    .option('filter', {
      type: 'boolean',
      default: true,
      describe: 'keep only correctly-predicted rows in the extrema stream (training exports); use --no-filter for test data',
    })
    .option('filter-embeddings', {
      type: 'boolean',
      default: false,
      describe: 'also apply the correct-prediction filter to the embedding stream',
    })
    .option('dataset-id', { type: 'string', describe: 'dataset identifier recorded in the manifest' })
    .option('list-layers', { type: 'boolean', default: false, describe: 'print layer names and exit' })
    .strict()
    .parseSync();
  return {
    model: parsed.model,
    data: parsed.data,
    labels: parsed.labels,
    outDir: parsed['out-dir'],
    penultimateLayer: parsed['penultimate-layer'],
    batchSize: parsed['batch-size'],
    filter: parsed.filter,
    filterEmbeddings: parsed['filter-embeddings'],
    datasetId: parsed['dataset-id'],
    listLayers: parsed['list-layers'],
  };
}

const isMain = process.argv[1] && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (isMain) {
  run(parseArgs(hideBin(process.argv))).catch((err) => {
    console.error(`combood-extract: error: ${err.message}`);
    process.exit(2);
  });
}
