#!/usr/bin/env node
import { parseArgs } from 'node:util'
import { BUILTIN_ID } from './backbone'
import { exportFeatures } from './export'

const USAGE = `usage: fbank-export export --images DIR --backbone ID --out FILE
                            [--templates FILE --text-out DIR] [--domain NAME]

Runs an embedding backbone over a class-subfolder image tree and writes a
labeled FBANK feature bank plus its JSON metadata sidecar. With --templates,
also writes per-class prompt-template banks into --text-out.

Backbones: ${BUILTIN_ID} (built in, deterministic) or local:<dir> with a
saved TensorFlow.js model already cut at its embedding output.`

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  if (command === '--help' || command === '-h' || command == null) {
    console.log(USAGE)
    return command == null ? 2 : 0
  }
  if (command !== 'export') {
    console.error(`unknown command: ${command}\n${USAGE}`)
    return 2
  }
  let values: Record<string, string | undefined>
  try {
    values = parseArgs({
      args: rest,
      options: {
        images: { type: 'string' },
        backbone: { type: 'string', default: BUILTIN_ID },
        out: { type: 'string' },
        templates: { type: 'string' },
        'text-out': { type: 'string' },
        domain: { type: 'string' },
      },
    }).values
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`)
    return 2
  }
  if (!values.images || !values.out) {
    console.error(`--images and --out are required\n${USAGE}`)
    return 2
  }
  if (Boolean(values.templates) !== Boolean(values['text-out'])) {
    console.error(`--templates and --text-out go together\n${USAGE}`)
    return 2
  }
  try {
    const result = await exportFeatures({
      imageRoot: values.images,
      backboneId: values.backbone ?? BUILTIN_ID,
      outPath: values.out,
      templatePath: values.templates,
      textOutDir: values['text-out'],
      domainName: values.domain,
    })
    console.log(
      JSON.stringify({
        out: result.outPath,
        rows: result.nRows,
        dim: result.dim,
        classes: result.classNames.length,
        skipped: result.skipped.length,
        template_rows: result.templateRows,
      }),
    )
    return 0
  } catch (err) {
    console.error((err as Error).message)
    return 1
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code
  })
}
