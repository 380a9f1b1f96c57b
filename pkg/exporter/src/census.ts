import * as fs from 'fs'
import * as path from 'path'

/**
 * Class-subfolder census of an image root:
 *
 *   root/
 *     bicycle/ img1.png img2.jpg ...
 *     chair/   ...
 *
 * Subfolder names define the label order. Traversal is sorted by name at
 * both levels so the row order of an export is reproducible.
 */

export interface ImageEntry {
  /** path relative to the image root, posix separators */
  relPath: string
  absPath: string
  label: number
}

export interface FolderCensus {
  classNames: string[]
  entries: ImageEntry[]
}

export class MissingClassFolderError extends Error {}

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg'])

export function isImageFile(name: string): boolean {
  return IMAGE_EXTENSIONS.has(path.extname(name).toLowerCase())
}

export function censusImageFolder(root: string): FolderCensus {
  let dirents: fs.Dirent[]
  try {
    dirents = fs.readdirSync(root, { withFileTypes: true })
  } catch (err) {
    throw new MissingClassFolderError(`${root}: ${(err as Error).message}`)
  }
  const classNames = dirents
    .filter(d => d.isDirectory())
    .map(d => d.name)
    .sort()
  if (classNames.length === 0) {
    throw new MissingClassFolderError(`${root}: no class subfolders`)
  }
  const entries: ImageEntry[] = []
  classNames.forEach((cls, label) => {
    const clsDir = path.join(root, cls)
    const names = fs
      .readdirSync(clsDir, { withFileTypes: true })
      .filter(d => d.isFile() && isImageFile(d.name))
      .map(d => d.name)
      .sort()
    for (const name of names) {
      entries.push({
        relPath: `${cls}/${name}`,
        absPath: path.join(clsDir, name),
        label,
      })
    }
  })
  return { classNames, entries }
}

/** Per-class image counts in label order. */
export function labelHistogram(census: FolderCensus): number[] {
  const counts = census.classNames.map(() => 0)
  for (const e of census.entries) counts[e.label] += 1
  return counts
}
