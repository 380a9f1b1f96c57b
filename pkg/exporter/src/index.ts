export { Bank, BankMeta, encodeBank, decodeBank, readBank, writeBank, metaPath } from './fbank'
export { Pixels, DecodeError, decodeImage } from './image'
export {
  FolderCensus,
  ImageEntry,
  MissingClassFolderError,
  censusImageFolder,
  labelHistogram,
} from './census'
export { Backbone, BUILTIN_ID, loadBackbone, fileSaveHandler } from './backbone'
export {
  ExportJob,
  ExportResult,
  SkippedImage,
  exportFeatures,
  readTemplates,
  renderTemplate,
} from './export'
