/**
 * Activation-layer hooking and feature export.
 *
 * For every activation layer the per-sample global min and max of the tensor
 * entering that layer are recorded, in network order, as columns
 * (min_1, max_1, min_2, max_2, ...). Embeddings are the raw output of the
 * layer feeding the classifier head (L2 normalization is the scoring
 * toolkit's job). The correct-prediction filter keeps the rows the classifier
 * gets right; it applies to training exports of the extrema stream.
 */

import * as tf from '@tensorflow/tfjs';

// Layer classes treated as nonlinearities whose *input* is hooked.
const ACTIVATION_CLASSES = new Set([
  'Activation',
  'ReLU',
  'LeakyReLU',
  'ELU',
  'ThresholdedReLU',
  'Softmax',
  'PReLU',
]);

export interface ExtractOptions {
  batchSize?: number;
  /** Layer whose output is the embedding; defaults to the classifier head's input. */
  penultimateLayer?: string;
}

export interface Extraction {
  /** n x 2r matrix, rows in dataset order. */
  extrema: Float64Array;
  /** Names of the r hooked activation layers, network order. */
  activationLayers: string[];
  /** n x embeddingWidth matrix, rows in dataset order. */
  embeddings: Float64Array;
  embeddingWidth: number;
  /** argmax of the model output per sample. */
  predictions: Int32Array;
  nSamples: number;
}

export function findActivationLayers(model: tf.LayersModel): tf.layers.Layer[] {
  return model.layers.filter((layer) => ACTIVATION_CLASSES.has(layer.getClassName()));
}

function singleTensor(value: tf.SymbolicTensor | tf.SymbolicTensor[], what: string): tf.SymbolicTensor {
  if (Array.isArray(value)) {
    if (value.length !== 1) {
      throw new Error(`${what} is ambiguous (${value.length} tensors); pass --penultimate-layer`);
    }
    return value[0];
  }
  return value;
}

/**
 * The embedding tensor: output of the named layer, or by default the input of
 * the classifier head (the last layer that is not a pure activation).
 */
export function resolveEmbeddingTensor(
  model: tf.LayersModel,
  penultimateLayer?: string,
): tf.SymbolicTensor {
  if (penultimateLayer !== undefined) {
    const layer = model.layers.find((l) => l.name === penultimateLayer);
    if (!layer) {
      const names = model.layers.map((l) => l.name).join(', ');
      throw new Error(`no layer named '${penultimateLayer}' (layers: ${names})`);
    }
    return singleTensor(layer.output as tf.SymbolicTensor | tf.SymbolicTensor[], `output of ${penultimateLayer}`);
  }
  for (let i = model.layers.length - 1; i >= 0; i--) {
    const layer = model.layers[i];
    if (!ACTIVATION_CLASSES.has(layer.getClassName())) {
      return singleTensor(layer.input as tf.SymbolicTensor | tf.SymbolicTensor[], `input of ${layer.name}`);
    }
  }
  throw new Error('model has no classifier head; pass --penultimate-layer');
}

function sampleSize(shape: number[]): number {
  return shape.slice(1).reduce((a, b) => a * b, 1);
}

export async function extractFeatures(
  model: tf.LayersModel,
  inputs: tf.Tensor,
  options: ExtractOptions = {},
): Promise<Extraction> {
  const batchSize = options.batchSize ?? 128;
  if (batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${batchSize}`);
  }
  const activations = findActivationLayers(model);
  if (activations.length === 0) {
    throw new Error('model has no activation layers to hook');
  }
  const hooked = activations.map((layer) =>
    singleTensor(layer.input as tf.SymbolicTensor | tf.SymbolicTensor[], `input of ${layer.name}`),
  );
  const embeddingTensor = resolveEmbeddingTensor(model, options.penultimateLayer);
  const outputTensor = singleTensor(
    model.outputs as unknown as tf.SymbolicTensor[],
    'model output',
  );
  // the same symbolic tensor may be wanted twice (e.g. an activation input
  // that is also the embedding); tf.model cannot execute duplicate outputs
  const unique: tf.SymbolicTensor[] = [];
  const indexOf = new Map<tf.SymbolicTensor, number>();
  for (const t of [...hooked, embeddingTensor, outputTensor]) {
    if (!indexOf.has(t)) {
      indexOf.set(t, unique.length);
      unique.push(t);
    }
  }
  const probe = tf.model({ inputs: model.inputs, outputs: unique });

  const n = inputs.shape[0];
  const r = activations.length;
  const embeddingWidth = sampleSize(embeddingTensor.shape.map((d) => d ?? 1));
  const extrema = new Float64Array(n * 2 * r);
  const embeddings = new Float64Array(n * embeddingWidth);
  const predictions = new Int32Array(n);

  for (let start = 0; start < n; start += batchSize) {
    const size = Math.min(batchSize, n - start);
    const batch = tf.slice(inputs, [start, ...inputs.shape.slice(1).map(() => 0)], [
      size,
      ...inputs.shape.slice(1),
    ]);
    const predicted = probe.predict(batch, { batchSize: size });
    const outputs = Array.isArray(predicted) ? predicted : [predicted];
    const get = (t: tf.SymbolicTensor) => outputs[indexOf.get(t)!];
    const reduceAxes = (t: tf.Tensor) => t.shape.map((_, axis) => axis).slice(1);

    for (let j = 0; j < r; j++) {
      const t = get(hooked[j]);
      const mins = await t.min(reduceAxes(t)).data();
      const maxs = await t.max(reduceAxes(t)).data();
      for (let i = 0; i < size; i++) {
        extrema[(start + i) * 2 * r + 2 * j] = mins[i];
        extrema[(start + i) * 2 * r + 2 * j + 1] = maxs[i];
      }
    }

    const emb = await get(embeddingTensor).reshape([size, embeddingWidth]).data();
    embeddings.set(emb, start * embeddingWidth);

    const preds = await get(outputTensor).argMax(1).data();
    predictions.set(preds, start);

    batch.dispose();
    outputs.forEach((t) => t.dispose());
  }

  return {
    extrema,
    activationLayers: activations.map((l) => l.name),
    embeddings,
    embeddingWidth,
    predictions,
    nSamples: n,
  };
}

/** Keep the rows whose prediction matches the label, preserving order. */
export function filterCorrect(
  matrix: Float64Array,
  cols: number,
  labels: ArrayLike<number>,
  predictions: ArrayLike<number>,
): { filtered: Float64Array; kept: number } {
  const n = matrix.length / cols;
  if (labels.length !== n || predictions.length !== n) {
    throw new Error(
      `filter inputs disagree: ${n} rows, ${labels.length} labels, ${predictions.length} predictions`,
    );
  }
  const keep: number[] = [];
  for (let i = 0; i < n; i++) {
    if (labels[i] === predictions[i]) {
      keep.push(i);
    }
  }
  if (keep.length === 0) {
    throw new Error('no correctly-predicted samples remain; cannot export an empty matrix');
  }
  const filtered = new Float64Array(keep.length * cols);
  keep.forEach((row, outRow) => {
    filtered.set(matrix.subarray(row * cols, (row + 1) * cols), outRow * cols);
  });
  return { filtered, kept: keep.length };
}
