#!/usr/bin/env node
/**
 * saddle-plots render --kind <kind> --in <csv...> --out <img>
 *
 * Reads simulator CSV output and writes one deterministic SVG figure.
 * Exit codes: 0 success, 1 any error (bad arguments, unreadable or
 * malformed input, unsupported output path).
 */

import { mkdirSync, realpathSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";
import { fileURLToPath } from "node:url";

import {
  CsvError,
  readDiagnostics,
  readRounds,
  readSummary,
  readSurface,
} from "./csv.js";
import {
  RenderError,
  accuracyVsBits,
  compressionErrorCurve,
  lambdaMaxBars,
  lossSurface3d,
  trainingCurves,
} from "./figures.js";

export const KINDS = [
  "accuracy_vs_bits",
  "compression_error_curve",
  "lambda_max_bars",
  "loss_surface_3d",
  "training_curves",
] as const;

export type Kind = (typeof KINDS)[number];

export interface FigureSpec {
  kind: Kind;
  inputs: string[];
  output: string;
}

class UsageError extends Error {}

const USAGE =
  "usage: saddle-plots render --kind <kind> --in <csv...> --out <img.svg>";

export function parseArgs(argv: string[]): FigureSpec {
  if (argv[0] !== "render") {
    throw new UsageError(
      argv.length === 0 ? USAGE : `unknown command '${argv[0]}'; ${USAGE}`,
    );
  }
  let kind: string | undefined;
  let output: string | undefined;
  const inputs: string[] = [];
  let i = 1;
  while (i < argv.length) {
    const arg = argv[i] as string;
    if (arg === "--kind") {
      kind = argv[++i];
      i += 1;
    } else if (arg === "--out") {
      output = argv[++i];
      i += 1;
    } else if (arg === "--in") {
      i += 1;
      while (i < argv.length && !(argv[i] as string).startsWith("--")) {
        inputs.push(argv[i] as string);
        i += 1;
      }
    } else {
      throw new UsageError(`unknown argument '${arg}'; ${USAGE}`);
    }
  }
  if (kind === undefined) {
    throw new UsageError(`--kind is required; ${USAGE}`);
  }
  if (!(KINDS as readonly string[]).includes(kind)) {
    throw new UsageError(
      `unknown kind '${kind}'; expected one of: ${KINDS.join(", ")}`,
    );
  }
  if (inputs.length === 0) {
    throw new UsageError(`--in needs at least one CSV path; ${USAGE}`);
  }
  if (output === undefined) {
    throw new UsageError(`--out is required; ${USAGE}`);
  }
  if (!output.endsWith(".svg")) {
    throw new UsageError(
      `unsupported output '${output}': figures are written as .svg`,
    );
  }
  return { kind: kind as Kind, inputs, output };
}

export function render(spec: FigureSpec): string {
  switch (spec.kind) {
    case "accuracy_vs_bits":
      return accuracyVsBits(spec.inputs.map(readSummary));
    case "compression_error_curve":
      return compressionErrorCurve(spec.inputs.map(readRounds));
    case "lambda_max_bars":
      return lambdaMaxBars(spec.inputs.map(readDiagnostics));
    case "loss_surface_3d":
      return lossSurface3d(spec.inputs.map(readSurface));
    case "training_curves":
      return trainingCurves(spec.inputs.map(readRounds));
  }
}

export function main(argv: string[]): number {
  try {
    const spec = parseArgs(argv);
    const svg = render(spec);
    mkdirSync(dirname(spec.output), { recursive: true });
    writeFileSync(spec.output, svg, "utf8");
    console.log(`wrote ${spec.output}`);
    return 0;
  } catch (err) {
    if (
      err instanceof UsageError ||
      err instanceof CsvError ||
      err instanceof RenderError
    ) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof Error && "code" in err) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

function isDirectInvocation(): boolean {
  const entry = process.argv[1];
  if (entry === undefined) {
    return false;
  }
  try {
    return realpathSync(entry) === fileURLToPath(import.meta.url);
  } catch {
    return false;
  }
}

if (isDirectInvocation()) {
  process.exitCode = main(process.argv.slice(2));
}
