import * as fs from 'fs'
import * as path from 'path'
import { Backbone, loadBackbone } from './backbone'
import { censusImageFolder } from './census'
import { writeBank } from './fbank'
import { DecodeError, decodeImage } from './image'

export interface ExportJob {
  imageRoot: string
  backboneId: string
  outPath: string
  /** text file with one prompt template per line, `{}` marks the class name */
  templatePath?: string
  /** directory for per-class template banks, required with templatePath */
  textOutDir?: string
  domainName?: string
}

export interface SkippedImage {
  file: string
  reason: string
}

export interface ExportResult {
  outPath: string
  nRows: number
  dim: number
  classNames: string[]
  skipped: SkippedImage[]
  templateFiles: string[]
  templateRows: number
}

export function readTemplates(file: string): string[] {
  const lines = fs
    .readFileSync(file, 'utf8')
    .split('\n')
    .map(line => line.trim())
    .filter(line => line.length > 0 && !line.startsWith('#'))
  if (lines.length === 0) {
    throw new Error(`${file}: no templates`)
  }
  return lines
}

export function renderTemplate(template: string, className: string): string {
  const name = className.replace(/_/g, ' ')
  return template.includes('{}')
    ? template.split('{}').join(name)
    : `${template} ${name}`
}

function sanitizeName(name: string): string {
  return name.replace(/[^A-Za-z0-9._-]/g, '_')
}

function exportTemplates(
  backbone: Backbone,
  classNames: string[],
  templatePath: string,
  textOutDir: string,
): { files: string[]; rows: number } {
  if (!backbone.hasTextHead) {
    throw new Error(
      `backbone ${backbone.id} has no text head; template export needs one`,
    )
  }
  const templates = readTemplates(templatePath)
  fs.mkdirSync(textOutDir, { recursive: true })
  const pad = Math.max(3, String(classNames.length - 1).length)
  const files: string[] = []
  classNames.forEach((cls, label) => {
    const features = new Float32Array(templates.length * backbone.dim)
    templates.forEach((template, row) => {
      features.set(backbone.embedText(renderTemplate(template, cls)), row * backbone.dim)
    })
    // the index prefix keeps sorted filename order equal to label order
    const name = `${String(label).padStart(pad, '0')}_${sanitizeName(cls)}.fbank`
    const outFile = path.join(textOutDir, name)
    writeBank(
      outFile,
      { features, n: templates.length, dim: backbone.dim, labels: null },
      {
        class_names: [cls],
        domain_name: 'text-templates',
        backbone_id: backbone.id,
        template_count: templates.length,
      },
    )
    files.push(outFile)
  })
  return { files, rows: templates.length * classNames.length }
}

/**
 * Run one backbone pass over a class-subfolder image tree and write the
 * result as a labeled feature bank. Undecodable images are skipped with a
 * warning; the sidecar records the per-row source files and the skip list,
 * so row indices stay traceable to inputs.
 */
export async function exportFeatures(job: ExportJob): Promise<ExportResult> {
  if (job.templatePath && !job.textOutDir) {
    throw new Error('templatePath requires textOutDir')
  }
  const census = censusImageFolder(job.imageRoot)
  const backbone = await loadBackbone(job.backboneId)

  const rows: Float32Array[] = []
  const labels: number[] = []
  const sourceFiles: string[] = []
  const skipped: SkippedImage[] = []
  for (const entry of census.entries) {
    try {
      rows.push(backbone.embedImage(decodeImage(entry.absPath)))
      labels.push(entry.label)
      sourceFiles.push(entry.relPath)
    } catch (err) {
      if (!(err instanceof DecodeError)) throw err
      console.warn(`skipping undecodable image: ${err.message}`)
      skipped.push({ file: entry.relPath, reason: err.message })
    }
  }

  const features = new Float32Array(rows.length * backbone.dim)
  rows.forEach((row, i) => features.set(row, i * backbone.dim))
  writeBank(
    job.outPath,
    {
      features,
      n: rows.length,
      dim: backbone.dim,
      labels: Int32Array.from(labels),
    },
    {
      class_names: census.classNames,
      domain_name: job.domainName ?? path.basename(path.resolve(job.imageRoot)),
      backbone_id: backbone.id,
      preprocessing: backbone.preprocessing,
      source_files: sourceFiles,
      skipped,
    },
  )

  let templateFiles: string[] = []
  let templateRows = 0
  if (job.templatePath && job.textOutDir) {
    const res = exportTemplates(
      backbone,
      census.classNames,
      job.templatePath,
      job.textOutDir,
    )
    templateFiles = res.files
    templateRows = res.rows
  }

  return {
    outPath: job.outPath,
    nRows: rows.length,
    dim: backbone.dim,
    classNames: census.classNames,
    skipped,
    templateFiles,
    templateRows,
  }
}
