/**
 * Strict readers for the simulator's CSV outputs.
 *
 * Four formats are understood, all plain comma-separated text with a single
 * header line and no quoting:
 *
 *  - rounds:      round,train_loss_mean,test_acc_consensus,consensus_error,
 *                 grad_norm_mean,compression_error_sum,update_norm_sum,
 *                 bits_transmitted_cumulative
 *  - diagnostics: metric,round,value
 *  - surface:     a,b,loss  (a complete odd-sided grid; one row has a=0,b=0)
 *  - summary:     group,algorithm,compression,runs,diverged,final_acc_mean,
 *                 final_acc_std,final_loss_mean,final_loss_std,bits_total_mean
 *
 * Parsing is deliberately unforgiving: a missing referenced column, a ragged
 * row, or a non-numeric field is an error naming the file and the offending
 * piece, never a silently skipped value.
 */

import { readFileSync } from "node:fs";
import { basename } from "node:path";

export class CsvError extends Error {}

export interface Table {
  path: string;
  header: string[];
  rows: string[][];
}

/** Parse CSV text into header + rows, enforcing a rectangular shape. */
export function parseCsv(text: string, path: string): Table {
  const lines = text.split(/\r?\n/);
  while (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop();
  }
  if (lines.length === 0) {
    throw new CsvError(`${path}: empty file`);
  }
  const header = (lines[0] as string).split(",");
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const fields = (lines[i] as string).split(",");
    if (fields.length !== header.length) {
      throw new CsvError(
        `${path}: line ${i + 1} has ${fields.length} fields, expected ${header.length}`,
      );
    }
    rows.push(fields);
  }
  return { path, header, rows };
}

export function readTable(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new CsvError(`${path}: ${(err as Error).message}`);
  }
  return parseCsv(text, path);
}

/**
 * Resolve the referenced columns to indices, or fail naming the first
 * missing one. Extra columns in the file are tolerated.
 */
export function requireColumns(
  table: Table,
  columns: readonly string[],
): Map<string, number> {
  const indices = new Map<string, number>();
  for (const column of columns) {
    const idx = table.header.indexOf(column);
    if (idx < 0) {
      throw new CsvError(`${table.path}: missing column '${column}'`);
    }
    indices.set(column, idx);
  }
  return indices;
}

export function requireDataRows(table: Table): void {
  if (table.rows.length === 0) {
    throw new CsvError(`${table.path}: no data rows`);
  }
}

const SPECIAL_NUMBERS = new Map<string, number>([
  ["nan", Number.NaN],
  ["inf", Number.POSITIVE_INFINITY],
  ["-inf", Number.NEGATIVE_INFINITY],
]);

/** Strict numeric field parse; accepts the writer's nan/inf spellings. */
export function parseNumber(raw: string, path: string, line: number): number {
  const special = SPECIAL_NUMBERS.get(raw);
  if (special !== undefined) {
    return special;
  }
  if (raw.trim() === "" || Number.isNaN(Number(raw))) {
    throw new CsvError(`${path}: line ${line}: not a number: '${raw}'`);
  }
  return Number(raw);
}

function stem(path: string): string {
  return basename(path).replace(/\.csv$/, "");
}

function numericReader(
  table: Table,
  indices: Map<string, number>,
): (row: string[], line: number, column: string) => number {
  return (row, line, column) =>
    parseNumber(row[indices.get(column) as number] as string, table.path, line);
}

// ---------------------------------------------------------------------------
// rounds CSV

export const ROUNDS_COLUMNS = [
  "round",
  "train_loss_mean",
  "test_acc_consensus",
  "consensus_error",
  "grad_norm_mean",
  "compression_error_sum",
  "update_norm_sum",
  "bits_transmitted_cumulative",
] as const;

export interface RoundsRow {
  round: number;
  trainLossMean: number;
  testAccConsensus: number;
  consensusError: number;
  gradNormMean: number;
  compressionErrorSum: number;
  updateNormSum: number;
  bitsTransmittedCumulative: number;
}

export interface RoundsFile {
  path: string;
  name: string;
  rows: RoundsRow[];
}

export function readRounds(path: string): RoundsFile {
  const table = readTable(path);
  const indices = requireColumns(table, ROUNDS_COLUMNS);
  requireDataRows(table);
  const num = numericReader(table, indices);
  const rows = table.rows.map((row, i) => {
    const line = i + 2;
    return {
      round: num(row, line, "round"),
      trainLossMean: num(row, line, "train_loss_mean"),
      testAccConsensus: num(row, line, "test_acc_consensus"),
      consensusError: num(row, line, "consensus_error"),
      gradNormMean: num(row, line, "grad_norm_mean"),
      compressionErrorSum: num(row, line, "compression_error_sum"),
      updateNormSum: num(row, line, "update_norm_sum"),
      bitsTransmittedCumulative: num(row, line, "bits_transmitted_cumulative"),
    };
  });
  return { path, name: stem(path), rows };
}

// ---------------------------------------------------------------------------
// diagnostics CSV

export const DIAG_COLUMNS = ["metric", "round", "value"] as const;

export interface DiagRow {
  metric: string;
  round: number;
  value: number;
}

export interface DiagFile {
  path: string;
  name: string;
  rows: DiagRow[];
}

export function readDiagnostics(path: string): DiagFile {
  const table = readTable(path);
  const indices = requireColumns(table, DIAG_COLUMNS);
  requireDataRows(table);
  const num = numericReader(table, indices);
  const metricIdx = indices.get("metric") as number;
  const rows = table.rows.map((row, i) => ({
    metric: row[metricIdx] as string,
    round: num(row, i + 2, "round"),
    value: num(row, i + 2, "value"),
  }));
  return { path, name: stem(path).replace(/_diag$/, ""), rows };
}

// ---------------------------------------------------------------------------
// surface CSV

export const SURFACE_COLUMNS = ["a", "b", "loss"] as const;

export interface SurfacePoint {
  a: number;
  b: number;
  loss: number;
  /** loss exactly as written in the file, for read-back checks */
  lossRaw: string;
}

export interface SurfaceFile {
  path: string;
  name: string;
  points: SurfacePoint[];
  /** sorted distinct grid coordinates */
  aValues: number[];
  bValues: number[];
  /** the a=0, b=0 entry */
  center: SurfacePoint;
}

export function readSurface(path: string): SurfaceFile {
  const table = readTable(path);
  const indices = requireColumns(table, SURFACE_COLUMNS);
  requireDataRows(table);
  const num = numericReader(table, indices);
  const lossIdx = indices.get("loss") as number;
  const points = table.rows.map((row, i) => ({
    a: num(row, i + 2, "a"),
    b: num(row, i + 2, "b"),
    loss: num(row, i + 2, "loss"),
    lossRaw: row[lossIdx] as string,
  }));
  const aValues = [...new Set(points.map((p) => p.a))].sort((x, y) => x - y);
  const bValues = [...new Set(points.map((p) => p.b))].sort((x, y) => x - y);
  if (points.length !== aValues.length * bValues.length) {
    throw new CsvError(
      `${path}: expected a complete ${aValues.length}x${bValues.length} grid, got ${points.length} points`,
    );
  }
  const center = points.find((p) => p.a === 0 && p.b === 0);
  if (center === undefined) {
    throw new CsvError(`${path}: no center entry (a=0, b=0)`);
  }
  return { path, name: stem(path).replace(/_surface$/, ""), points, aValues, bValues, center };
}

// ---------------------------------------------------------------------------
// summary CSV

export const SUMMARY_COLUMNS = [
  "group",
  "algorithm",
  "compression",
  "runs",
  "diverged",
  "final_acc_mean",
  "final_acc_std",
  "final_loss_mean",
  "final_loss_std",
  "bits_total_mean",
] as const;

export interface SummaryRow {
  group: string;
  algorithm: string;
  compression: string;
  runs: number;
  diverged: number;
  finalAccMean: number;
  finalAccStd: number;
  finalLossMean: number;
  finalLossStd: number;
  bitsTotalMean: number;
}

export interface SummaryFile {
  path: string;
  name: string;
  rows: SummaryRow[];
}

export function readSummary(path: string): SummaryFile {
  const table = readTable(path);
  const indices = requireColumns(table, SUMMARY_COLUMNS);
  requireDataRows(table);
  const num = numericReader(table, indices);
  const groupIdx = indices.get("group") as number;
  const algorithmIdx = indices.get("algorithm") as number;
  const compressionIdx = indices.get("compression") as number;
  const rows = table.rows.map((row, i) => {
    const line = i + 2;
    return {
      group: row[groupIdx] as string,
      algorithm: row[algorithmIdx] as string,
      compression: row[compressionIdx] as string,
      runs: num(row, line, "runs"),
      diverged: num(row, line, "diverged"),
      finalAccMean: num(row, line, "final_acc_mean"),
      finalAccStd: num(row, line, "final_acc_std"),
      finalLossMean: num(row, line, "final_loss_mean"),
      finalLossStd: num(row, line, "final_loss_std"),
      bitsTotalMean: num(row, line, "bits_total_mean"),
    };
  });
  return { path, name: stem(path), rows };
}
