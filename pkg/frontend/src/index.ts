export {
  CsvError,
  DIAG_COLUMNS,
  ROUNDS_COLUMNS,
  SUMMARY_COLUMNS,
  SURFACE_COLUMNS,
  parseCsv,
  parseNumber,
  readDiagnostics,
  readRounds,
  readSummary,
  readSurface,
  readTable,
  requireColumns,
  requireDataRows,
} from "./csv.js";
export type {
  DiagFile,
  DiagRow,
  RoundsFile,
  RoundsRow,
  SummaryFile,
  SummaryRow,
  SurfaceFile,
  SurfacePoint,
  Table,
} from "./csv.js";
export {
  RenderError,
  accuracyVsBits,
  compressionErrorCurve,
  lambdaMaxBars,
  lossSurface3d,
  trainingCurves,
} from "./figures.js";
export { KINDS, main, parseArgs, render } from "./cli.js";
export type { FigureSpec, Kind } from "./cli.js";
