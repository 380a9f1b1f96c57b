import * as fs from 'fs'
import { PNG } from 'pngjs'
import * as jpeg from 'jpeg-js'

export interface Pixels {
  width: number
  height: number
  /** RGB, row-major, 3 bytes per pixel */
  data: Uint8Array
}

export class DecodeError extends Error {}

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47])
const JPEG_MAGIC = Buffer.from([0xff, 0xd8])

function rgbaToRgb(width: number, height: number, rgba: Uint8Array): Pixels {
  const out = new Uint8Array(width * height * 3)
  for (let i = 0, j = 0; i < rgba.length; i += 4, j += 3) {
    out[j] = rgba[i]
    out[j + 1] = rgba[i + 1]
    out[j + 2] = rgba[i + 2]
  }
  return { width, height, data: out }
}

/** Decode a PNG or JPEG file to packed RGB; alpha is dropped. */
export function decodeImage(file: string): Pixels {
  let buf: Buffer
  try {
    buf = fs.readFileSync(file)
  } catch (err) {
    throw new DecodeError(`${file}: ${(err as Error).message}`)
  }
  try {
    if (buf.subarray(0, 4).equals(PNG_MAGIC)) {
      const png = PNG.sync.read(buf)
      return rgbaToRgb(png.width, png.height, png.data)
    }
    if (buf.subarray(0, 2).equals(JPEG_MAGIC)) {
      const img = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 256 })
      return rgbaToRgb(img.width, img.height, img.data)
    }
  } catch (err) {
    throw new DecodeError(`${file}: ${(err as Error).message}`)
  }
  throw new DecodeError(`${file}: not a PNG or JPEG`)
}
