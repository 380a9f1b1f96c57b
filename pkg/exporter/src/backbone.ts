import * as crypto from 'crypto'
import * as fs from 'fs'
import * as path from 'path'
import type * as tfTypes from '@tensorflow/tfjs'
import { Pixels } from './image'

/**
 * An embedding backbone maps decoded images (and, when it has a text head,
 * prompt strings) into a fixed-dimension float32 space. Two kinds exist:
 *
 *   patch-stats       built in, weight free and fully deterministic; images
 *                     are box-mean pooled onto an 8x8 RGB grid, text goes
 *                     through a hashing featurizer into the same space
 *   local:<dir>       a TensorFlow.js layers or graph model saved on disk
 *                     (model.json + weight shards), already cut at its
 *                     embedding output; image only
 */

export interface Backbone {
  id: string
  dim: number
  /** recorded in the bank sidecar, not fixed globally */
  preprocessing: string
  hasTextHead: boolean
  embedImage(pixels: Pixels): Float32Array
  embedText(text: string): Float32Array
}

export const BUILTIN_ID = 'patch-stats'
const GRID = 8
const BUILTIN_DIM = GRID * GRID * 3

function patchMeans(pixels: Pixels): Float32Array {
  const { width: w, height: h, data } = pixels
  const out = new Float32Array(BUILTIN_DIM)
  let k = 0
  for (let gy = 0; gy < GRID; gy++) {
    // cell boxes cover at least one pixel even when the image is tiny
    const y0 = Math.floor((gy * h) / GRID)
    const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * h) / GRID))
    for (let gx = 0; gx < GRID; gx++) {
      const x0 = Math.floor((gx * w) / GRID)
      const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * w) / GRID))
      let r = 0
      let g = 0
      let b = 0
      for (let y = y0; y < y1; y++) {
        let off = (y * w + x0) * 3
        for (let x = x0; x < x1; x++, off += 3) {
          r += data[off]
          g += data[off + 1]
          b += data[off + 2]
        }
      }
      const count = (y1 - y0) * (x1 - x0) * 255
      out[k++] = r / count
      out[k++] = g / count
      out[k++] = b / count
    }
  }
  return out
}

function hashText(text: string, dim: number): Float32Array {
  const out = new Float32Array(dim)
  let filled = 0
  for (let block = 0; filled < dim; block++) {
    const digest = crypto
      .createHash('sha256')
      .update(text, 'utf8')
      .update(Buffer.from([0, block]))
      .digest()
    for (let i = 0; i < 8 && filled < dim; i++) {
      // u32 words mapped onto [-1, 1)
      out[filled++] = digest.readUInt32LE(i * 4) / 2 ** 31 - 1
    }
  }
  return out
}

function builtinBackbone(): Backbone {
  return {
    id: BUILTIN_ID,
    dim: BUILTIN_DIM,
    preprocessing: `rgb box-mean pooled to ${GRID}x${GRID} grid, values scaled to [0,1]`,
    hasTextHead: true,
    embedImage: patchMeans,
    embedText: text => hashText(text, BUILTIN_DIM),
  }
}

interface WeightsManifestGroup {
  paths: string[]
  weights: tfTypes.io.WeightsManifestEntry[]
}

function fileLoadHandler(dir: string): tfTypes.io.IOHandler {
  return {
    load: async () => {
      const modelJson = JSON.parse(
        fs.readFileSync(path.join(dir, 'model.json'), 'utf8'),
      )
      const manifest: WeightsManifestGroup[] = modelJson.weightsManifest ?? []
      const weightSpecs: tfTypes.io.WeightsManifestEntry[] = []
      const shards: Buffer[] = []
      for (const group of manifest) {
        weightSpecs.push(...group.weights)
        for (const p of group.paths) {
          shards.push(fs.readFileSync(path.join(dir, p)))
        }
      }
      const joined = Buffer.concat(shards)
      const weightData = joined.buffer.slice(
        joined.byteOffset,
        joined.byteOffset + joined.byteLength,
      )
      return {
        modelTopology: modelJson.modelTopology,
        format: modelJson.format,
        generatedBy: modelJson.generatedBy,
        convertedBy: modelJson.convertedBy,
        trainingConfig: modelJson.trainingConfig,
        weightSpecs,
        weightData,
      }
    },
  }
}

export function fileSaveHandler(dir: string): tfTypes.io.IOHandler {
  return {
    save: async (artifacts: tfTypes.io.ModelArtifacts) => {
      fs.mkdirSync(dir, { recursive: true })
      const data = artifacts.weightData
      const parts = data == null ? [] : Array.isArray(data) ? data : [data]
      const weights = Buffer.concat(parts.map(p => Buffer.from(p)))
      fs.writeFileSync(path.join(dir, 'weights.bin'), weights)
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy,
        trainingConfig: artifacts.trainingConfig,
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(modelJson))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      }
    },
  }
}

async function loadLocalBackbone(dir: string): Promise<Backbone> {
  const tf = await import('@tensorflow/tfjs')
  await tf.setBackend('cpu')
  const modelJson = JSON.parse(
    fs.readFileSync(path.join(dir, 'model.json'), 'utf8'),
  )
  const topology = modelJson.modelTopology ?? {}
  const isLayers =
    modelJson.format === 'layers-model' ||
    topology.class_name != null ||
    topology.model_config != null
  const model = isLayers
    ? await tf.loadLayersModel(fileLoadHandler(dir))
    : await tf.loadGraphModel(fileLoadHandler(dir))

  const inputShape = model.inputs[0].shape ?? []
  const height = inputShape[1] && inputShape[1] > 0 ? inputShape[1] : 224
  const width = inputShape[2] && inputShape[2] > 0 ? inputShape[2] : 224

  const embed = (pixels: Pixels): Float32Array => {
    const out = tf.tidy(() => {
      const img = tf
        .tensor3d(pixels.data, [pixels.height, pixels.width, 3], 'int32')
        .toFloat()
        .div(255)
      const batched = tf.image
        .resizeBilinear(img as tfTypes.Tensor3D, [height, width])
        .expandDims(0)
      const raw = model.predict(batched as tfTypes.Tensor4D)
      const first = Array.isArray(raw) ? raw[0] : (raw as tfTypes.Tensor)
      return first.flatten()
    })
    const values = out.dataSync() as Float32Array
    out.dispose()
    return Float32Array.from(values)
  }

  // probe once to learn the embedding width
  const probe = embed({ width: 2, height: 2, data: new Uint8Array(12) })
  return {
    id: `local:${dir}`,
    dim: probe.length,
    preprocessing: `resize-bilinear ${height}x${width}, rgb scaled to [0,1]`,
    hasTextHead: false,
    embedImage: embed,
    embedText: () => {
      throw new Error(`backbone local:${dir} has no text head`)
    },
  }
}

export async function loadBackbone(id: string): Promise<Backbone> {
  if (id === BUILTIN_ID) {
    return builtinBackbone()
  }
  if (id.startsWith('local:')) {
    return loadLocalBackbone(id.slice('local:'.length))
  }
  throw new Error(`unknown backbone ${id}; use ${BUILTIN_ID} or local:<dir>`)
}
