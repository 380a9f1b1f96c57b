import * as fs from 'fs'
import * as path from 'path'
import { fileURLToPath } from 'url'
import { PNG } from 'pngjs'

export type PixelFn = (x: number, y: number) => [number, number, number]

export function makePng(width: number, height: number, fn: PixelFn): Buffer {
  const png = new PNG({ width, height })
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = fn(x, y)
      const off = (y * width + x) * 4
      png.data[off] = r
      png.data[off + 1] = g
      png.data[off + 2] = b
      png.data[off + 3] = 255
    }
  }
  return PNG.sync.write(png)
}

export function solid(r: number, g: number, b: number): PixelFn {
  return () => [r, g, b]
}

export function gradient(scale: number): PixelFn {
  return (x, y) => [(x * scale) % 256, (y * scale) % 256, (x + y) % 256]
}

export interface FixtureImage {
  name: string
  width: number
  height: number
  fn: PixelFn
}

/** Write `class -> images` into root as a class-subfolder tree. */
export function writeImageTree(
  root: string,
  classes: Record<string, FixtureImage[]>,
): void {
  for (const [cls, images] of Object.entries(classes)) {
    const dir = path.join(root, cls)
    fs.mkdirSync(dir, { recursive: true })
    for (const img of images) {
      fs.writeFileSync(path.join(dir, img.name), makePng(img.width, img.height, img.fn))
    }
  }
}

/** 10 images over two classes, the label histogram is [4, 6]. */
export function writeTenImageFixture(root: string): void {
  writeImageTree(root, {
    bicycle: [
      { name: 'a.png', width: 12, height: 9, fn: solid(200, 30, 30) },
      { name: 'b.png', width: 16, height: 16, fn: gradient(20) },
      { name: 'c.png', width: 7, height: 5, fn: solid(180, 60, 10) },
      { name: 'd.png', width: 9, height: 14, fn: gradient(35) },
    ],
    chair: [
      { name: 'e.png', width: 10, height: 10, fn: solid(20, 160, 220) },
      { name: 'f.png', width: 8, height: 8, fn: gradient(50) },
      { name: 'g.png', width: 15, height: 6, fn: solid(10, 90, 190) },
      { name: 'h.png', width: 6, height: 15, fn: gradient(11) },
      { name: 'i.png', width: 11, height: 11, fn: solid(60, 60, 60) },
      { name: 'j.png', width: 13, height: 4, fn: gradient(73) },
    ],
  })
}

const HERE = path.dirname(fileURLToPath(import.meta.url))

/** src/ tree of the core package this repo ships alongside the exporter */
export const CORE_SRC_DIR = path.resolve(HERE, '..', '..', 'src')
