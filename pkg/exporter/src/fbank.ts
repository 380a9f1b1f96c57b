import * as fs from 'fs'

/**
 * FBANK v1 binary layout, all integers little-endian:
 *
 *   magic   4 bytes  "FBNK"
 *   version u32      1
 *   N       u32
 *   D       u32
 *   labels  u8       1 if a label block follows the features, else 0
 *   data    N*D float32, row-major
 *   labels  N int32, only when the flag is 1
 *
 * Class names and the domain name travel in a JSON sidecar at
 * `<path>.meta.json`; extra keys in the sidecar are allowed.
 */

export const MAGIC = 'FBNK'
export const VERSION = 1
const HEADER_BYTES = 17

export interface Bank {
  /** row-major N x dim */
  features: Float32Array
  n: number
  dim: number
  labels: Int32Array | null
}

export interface BankMeta {
  class_names: string[]
  domain_name: string
  [key: string]: unknown
}

export function encodeBank(bank: Bank): Buffer {
  const { features, n, dim, labels } = bank
  if (features.length !== n * dim) {
    throw new Error(`feature length ${features.length} does not match ${n}x${dim}`)
  }
  if (labels && labels.length !== n) {
    throw new Error(`label count ${labels.length} does not match N=${n}`)
  }
  const size = HEADER_BYTES + n * dim * 4 + (labels ? n * 4 : 0)
  const buf = Buffer.alloc(size)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(VERSION, 4)
  buf.writeUInt32LE(n, 8)
  buf.writeUInt32LE(dim, 12)
  buf.writeUInt8(labels ? 1 : 0, 16)
  let off = HEADER_BYTES
  for (let i = 0; i < features.length; i++, off += 4) {
    buf.writeFloatLE(features[i], off)
  }
  if (labels) {
    for (let i = 0; i < n; i++, off += 4) {
      buf.writeInt32LE(labels[i], off)
    }
  }
  return buf
}

export function decodeBank(buf: Buffer): Bank {
  if (buf.length < HEADER_BYTES || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error('not an FBANK file')
  }
  const version = buf.readUInt32LE(4)
  if (version !== VERSION) {
    throw new Error(`unsupported FBANK version ${version}`)
  }
  const n = buf.readUInt32LE(8)
  const dim = buf.readUInt32LE(12)
  const flag = buf.readUInt8(16)
  const expected = HEADER_BYTES + n * dim * 4 + (flag ? n * 4 : 0)
  if (buf.length !== expected) {
    throw new Error(`FBANK size ${buf.length}, expected ${expected}`)
  }
  const features = new Float32Array(n * dim)
  let off = HEADER_BYTES
  for (let i = 0; i < features.length; i++, off += 4) {
    features[i] = buf.readFloatLE(off)
  }
  let labels: Int32Array | null = null
  if (flag) {
    labels = new Int32Array(n)
    for (let i = 0; i < n; i++, off += 4) {
      labels[i] = buf.readInt32LE(off)
    }
  }
  return { features, n, dim, labels }
}

function sortedStringify(value: unknown, indent: number): string {
  // JSON with object keys sorted so repeated exports are byte-identical
  const sorter = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sorter)
    if (v !== null && typeof v === 'object') {
      const out: Record<string, unknown> = {}
      for (const key of Object.keys(v as object).sort()) {
        out[key] = sorter((v as Record<string, unknown>)[key])
      }
      return out
    }
    return v
  }
  return JSON.stringify(sorter(value), null, indent)
}

export function metaPath(bankPath: string): string {
  return bankPath + '.meta.json'
}

export function writeBank(path: string, bank: Bank, meta: BankMeta): void {
  fs.writeFileSync(path, encodeBank(bank))
  fs.writeFileSync(metaPath(path), sortedStringify(meta, 2) + '\n')
}

export function readBank(path: string): { bank: Bank; meta: BankMeta } {
  const bank = decodeBank(fs.readFileSync(path))
  let meta: BankMeta = { class_names: [], domain_name: '' }
  if (fs.existsSync(metaPath(path))) {
    meta = JSON.parse(fs.readFileSync(metaPath(path), 'utf8'))
  }
  return { bank, meta }
}
