import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { afterEach, beforeEach, describe, expect, it } from 'vitest'
import { decodeBank, encodeBank, metaPath, readBank, writeBank } from '../src/fbank'

let tmp: string

beforeEach(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'fbank-'))
})

afterEach(() => {
  fs.rmSync(tmp, { recursive: true, force: true })
})

describe('binary layout', () => {
  it('writes the documented header', () => {
    const buf = encodeBank({
      features: Float32Array.from([1.5, -2, 0.25, 8, 0, 3]),
      n: 2,
      dim: 3,
      labels: Int32Array.from([0, 1]),
    })
    expect(buf.toString('ascii', 0, 4)).toBe('FBNK')
    expect(buf.readUInt32LE(4)).toBe(1)
    expect(buf.readUInt32LE(8)).toBe(2)
    expect(buf.readUInt32LE(12)).toBe(3)
    expect(buf.readUInt8(16)).toBe(1)
    expect(buf.length).toBe(17 + 2 * 3 * 4 + 2 * 4)
    expect(buf.readFloatLE(17)).toBe(1.5)
    expect(buf.readInt32LE(17 + 24 + 4)).toBe(1)
  })

  it('omits the label block for unlabeled banks', () => {
    const buf = encodeBank({
      features: Float32Array.from([1, 2]),
      n: 1,
      dim: 2,
      labels: null,
    })
    expect(buf.readUInt8(16)).toBe(0)
    expect(buf.length).toBe(17 + 8)
  })

  it('round trips through decode', () => {
    const features = Float32Array.from({ length: 12 }, (_, i) => Math.fround(Math.sin(i)))
    const labels = Int32Array.from([2, -1, 0])
    const bank = { features, n: 3, dim: 4, labels }
    const back = decodeBank(encodeBank(bank))
    expect(Array.from(back.features)).toEqual(Array.from(features))
    expect(Array.from(back.labels!)).toEqual([2, -1, 0])
    expect(back.n).toBe(3)
    expect(back.dim).toBe(4)
  })

  it('rejects wrong magic and truncation', () => {
    const good = encodeBank({
      features: Float32Array.from([1, 2, 3, 4]),
      n: 2,
      dim: 2,
      labels: null,
    })
    const bad = Buffer.from(good)
    bad.write('JUNK', 0, 'ascii')
    expect(() => decodeBank(bad)).toThrow(/not an FBANK/)
    expect(() => decodeBank(good.subarray(0, good.length - 2))).toThrow(/expected/)
  })

  it('rejects mismatched shapes at encode time', () => {
    expect(() =>
      encodeBank({ features: new Float32Array(5), n: 2, dim: 3, labels: null }),
    ).toThrow(/does not match/)
    expect(() =>
      encodeBank({
        features: new Float32Array(6),
        n: 2,
        dim: 3,
        labels: Int32Array.from([1]),
      }),
    ).toThrow(/label count/)
  })
})

describe('file round trip', () => {
  it('keeps features, labels and metadata', () => {
    const file = path.join(tmp, 'bank.fbank')
    writeBank(
      file,
      {
        features: Float32Array.from([0.5, 1.5, 2.5, 3.5]),
        n: 2,
        dim: 2,
        labels: Int32Array.from([1, 0]),
      },
      { class_names: ['cat', 'dog'], domain_name: 'demo', backbone_id: 'patch-stats' },
    )
    const { bank, meta } = readBank(file)
    expect(bank.n).toBe(2)
    expect(Array.from(bank.labels!)).toEqual([1, 0])
    expect(meta.class_names).toEqual(['cat', 'dog'])
    expect(meta.domain_name).toBe('demo')
    expect(meta.backbone_id).toBe('patch-stats')
  })

  it('writes the sidecar next to the bank', () => {
    const file = path.join(tmp, 'b.fbank')
    writeBank(
      file,
      { features: new Float32Array(2), n: 1, dim: 2, labels: null },
      { class_names: [], domain_name: '' },
    )
    expect(fs.existsSync(metaPath(file))).toBe(true)
    const meta = JSON.parse(fs.readFileSync(metaPath(file), 'utf8'))
    expect(meta).toEqual({ class_names: [], domain_name: '' })
  })

  it('serializes metadata with sorted keys', () => {
    const file = path.join(tmp, 'c.fbank')
    writeBank(
      file,
      { features: new Float32Array(1), n: 1, dim: 1, labels: null },
      { domain_name: 'd', class_names: ['a'], zebra: 1, alpha: 2 },
    )
    const text = fs.readFileSync(metaPath(file), 'utf8')
    const keys = [...text.matchAll(/^  "(\w+)":/gm)].map(m => m[1])
    expect(keys).toEqual([...keys].sort())
    expect(text.endsWith('\n')).toBe(true)
  })
})
