/**
 * Figure builders: parsed CSV data in, standalone SVG text out.
 *
 * Five figure kinds are supported:
 *
 *  - accuracy_vs_bits:        final accuracy against payload width, from
 *                             summary CSVs (quantized rows plus full-precision
 *                             rows at 32 bits; one line per algorithm family)
 *  - compression_error_curve: per-round compression error, one line per run
 *  - lambda_max_bars:         sharpness estimates as grouped bars, one group
 *                             per run, one bar per probed round
 *  - loss_surface_3d:         isometric wireframe of a loss-surface grid;
 *                             overlays two surfaces when given two grids
 *  - training_curves:         training loss and test accuracy per round,
 *                             stacked panels, one line per run
 *
 * Rendering is pure and deterministic: fixed styles and palette, no
 * timestamps, and input data is never altered or reordered — series appear
 * in input order and keep their file's row order.
 */

import type { DiagFile, RoundsFile, SummaryFile, SurfaceFile } from "./csv.js";
import {
  FONT,
  Frame,
  axes,
  color,
  document,
  esc,
  fmt,
  fmtTick,
  legend,
  linearScale,
  padRange,
  polyline,
  title,
} from "./svg.js";

export class RenderError extends Error {}

const WIDTH = 640;

function finiteExtent(values: number[], what: string): [number, number] {
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) {
    throw new RenderError(`no finite ${what} values to plot`);
  }
  return [Math.min(...finite), Math.max(...finite)];
}

// ---------------------------------------------------------------------------
// accuracy_vs_bits

interface BitsPoint {
  bits: number;
  acc: number;
  std: number;
}

/** Payload width for a summary row: 32 for uncompressed, b for quant:b. */
function payloadBits(compression: string): number | null {
  if (compression === "none") {
    return 32;
  }
  const match = /^quant:(\d+)$/.exec(compression);
  return match === null ? null : Number(match[1]);
}

/**
 * Series key: the algorithm family (compressed and plain variants of the
 * same update rule share a line) plus the Dirichlet-alpha tag when the
 * sweep had one, so different data skews stay separate.
 */
function seriesKey(algorithm: string, group: string): string {
  const family = algorithm.replace(/^comp_/, "");
  const alpha = /_a([0-9.eE+-]+)$/.exec(group);
  return alpha === null ? family : `${family} a=${alpha[1]}`;
}

export function accuracyVsBits(summaries: SummaryFile[]): string {
  const series = new Map<string, BitsPoint[]>();
  for (const file of summaries) {
    for (const row of file.rows) {
      const bits = payloadBits(row.compression);
      if (bits === null) {
        continue; // sign / top-k rows have no payload-width axis
      }
      const key = seriesKey(row.algorithm, row.group);
      const points = series.get(key) ?? [];
      points.push({ bits, acc: row.finalAccMean, std: row.finalAccStd });
      series.set(key, points);
    }
  }
  if (series.size === 0) {
    throw new RenderError(
      "no quantized or uncompressed rows in the summary inputs",
    );
  }

  const height = 420;
  const frame: Frame = { left: 64, top: 36, width: WIDTH - 88, height: height - 96 };
  const all = [...series.values()].flat();
  const [bitsLo, bitsHi] = finiteExtent(all.map((p) => p.bits), "bits");
  const accValues = all.flatMap((p) => [p.acc - p.std, p.acc + p.std]);
  const [accLo, accHi] = finiteExtent(accValues, "accuracy");
  const xScale = linearScale(...padRange(bitsLo, bitsHi), frame.left, frame.left + frame.width);
  const yScale = linearScale(...padRange(accLo, accHi), frame.top + frame.height, frame.top);

  const bitsTicks = [...new Set(all.map((p) => p.bits))].sort((a, b) => a - b);
  const parts: string[] = [
    title(WIDTH, "final accuracy vs payload width"),
    axes(frame, xScale, yScale, "payload bits per entry", "final test accuracy", {
      xTicks: bitsTicks,
    }),
  ];
  let i = 0;
  for (const [, points] of series) {
    const c = color(i);
    const sorted = [...points].sort((p, q) => p.bits - q.bits);
    parts.push(
      polyline(sorted.map((p) => [xScale(p.bits), yScale(p.acc)]), c),
    );
    for (const p of sorted) {
      const x = fmt(xScale(p.bits));
      if (p.std > 0) {
        const yLo = fmt(yScale(p.acc - p.std));
        const yHi = fmt(yScale(p.acc + p.std));
        parts.push(
          `<line x1="${x}" y1="${yLo}" x2="${x}" y2="${yHi}" stroke="${c}" stroke-width="1"/>`,
        );
      }
      parts.push(
        `<circle cx="${x}" cy="${fmt(yScale(p.acc))}" r="3" fill="${c}"/>`,
      );
    }
    i += 1;
  }
  parts.push(legend(frame, [...series.keys()]));
  return document(WIDTH, height, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// compression_error_curve

export function compressionErrorCurve(runs: RoundsFile[]): string {
  const height = 420;
  const frame: Frame = { left: 64, top: 36, width: WIDTH - 88, height: height - 96 };
  const allRows = runs.flatMap((r) => r.rows);
  const [xLo, xHi] = finiteExtent(allRows.map((r) => r.round), "round");
  const [yLo, yHi] = finiteExtent(
    allRows.map((r) => r.compressionErrorSum),
    "compression error",
  );
  const xScale = linearScale(...padRange(xLo, xHi), frame.left, frame.left + frame.width);
  const yScale = linearScale(...padRange(Math.min(0, yLo), yHi), frame.top + frame.height, frame.top);

  const parts: string[] = [
    title(WIDTH, "compression error per round"),
    axes(frame, xScale, yScale, "round", "compression error (sum over agents)"),
  ];
  runs.forEach((run, i) => {
    parts.push(
      polyline(
        run.rows.map((r) => [xScale(r.round), yScale(r.compressionErrorSum)]),
        color(i),
      ),
    );
  });
  parts.push(legend(frame, runs.map((r) => r.name)));
  return document(WIDTH, height, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// lambda_max_bars

export function lambdaMaxBars(diags: DiagFile[]): string {
  const perFile = diags.map((file) => {
    const rows = file.rows.filter((r) => r.metric === "lambda_max");
    if (rows.length === 0) {
      throw new RenderError(`${file.path}: no lambda_max rows`);
    }
    return { name: file.name, rows };
  });
  const rounds = [
    ...new Set(perFile.flatMap((f) => f.rows.map((r) => r.round))),
  ].sort((a, b) => a - b);

  const height = 440;
  const frame: Frame = { left: 64, top: 36, width: WIDTH - 88, height: height - 116 };
  const values = perFile.flatMap((f) => f.rows.map((r) => r.value));
  const [vLo, vHi] = finiteExtent(values, "lambda_max");
  const yScale = linearScale(
    Math.min(0, vLo) * 1.05,
    Math.max(0, vHi) * 1.05 || 1,
    frame.top + frame.height,
    frame.top,
  );
  const xScale = linearScale(0, perFile.length, frame.left, frame.left + frame.width);

  const parts: string[] = [
    title(WIDTH, "sharpness (largest Hessian eigenvalue)"),
    axes(frame, xScale, yScale, "", "lambda_max", { xTicks: [] }),
  ];
  const groupWidth = frame.width / perFile.length;
  const barWidth = Math.min(28, (groupWidth * 0.7) / rounds.length);
  perFile.forEach((file, g) => {
    const groupLeft = xScale(g) + groupWidth / 2 - (barWidth * rounds.length) / 2;
    for (const row of file.rows) {
      const k = rounds.indexOf(row.round);
      const x = groupLeft + k * barWidth;
      const y0 = yScale(0);
      const y1 = yScale(row.value);
      const top = Math.min(y0, y1);
      parts.push(
        `<rect x="${fmt(x)}" y="${fmt(top)}" width="${fmt(barWidth - 2)}" height="${fmt(Math.abs(y0 - y1))}" fill="${color(k)}"/>`,
      );
    }
    const cx = fmt(xScale(g) + groupWidth / 2);
    const cy = fmt(frame.top + frame.height + 14);
    parts.push(
      `<text x="${cx}" y="${cy}" text-anchor="end" font-size="9" fill="#374151" ${FONT} transform="rotate(-25 ${cx} ${cy})">${esc(file.name)}</text>`,
    );
  });
  parts.push(legend(frame, rounds.map((r) => `round ${fmtTick(r)}`)));
  return document(WIDTH, height, parts.join("\n"));
}

// ---------------------------------------------------------------------------
// loss_surface_3d

const ISO_X = Math.cos(Math.PI / 6);
const ISO_Y = Math.sin(Math.PI / 6);
const Z_HEIGHT = 0.9;

export function lossSurface3d(surfaces: SurfaceFile[]): string {
  if (surfaces.length < 1 || surfaces.length > 2) {
    throw new RenderError(
      `loss_surface_3d takes one or two surface grids, got ${surfaces.length}`,
    );
  }
  const allPoints = surfaces.flatMap((s) => s.points);
  const [aLo, aHi] = finiteExtent(allPoints.map((p) => p.a), "a");
  const [bLo, bHi] = finiteExtent(allPoints.map((p) => p.b), "b");
  const [zLo, zHi] = finiteExtent(allPoints.map((p) => p.loss), "loss");
  const aSpan = aHi - aLo || 1;
  const bSpan = bHi - bLo || 1;
  const zSpan = zHi - zLo || 1;

  // isometric projection of the unit cube, then fitted to the frame
  const project = (a: number, b: number, loss: number): [number, number] => {
    const u = (a - aLo) / aSpan;
    const v = (b - bLo) / bSpan;
    const z = (loss - zLo) / zSpan;
    return [(u - v) * ISO_X, (u + v) * ISO_Y - z * Z_HEIGHT];
  };

  const height = 480;
  const frame: Frame = { left: 40, top: 44, width: WIDTH - 80, height: height - 110 };
  const sx = linearScale(-ISO_X, ISO_X, frame.left, frame.left + frame.width);
  const sy = linearScale(-Z_HEIGHT, 2 * ISO_Y, frame.top + frame.height, frame.top);
  const place = (a: number, b: number, loss: number): [number, number] => {
    const [px, py] = project(a, b, loss);
    return [sx(px), sy(py)];
  };

  const parts: string[] = [title(WIDTH, "loss surface")];
  surfaces.forEach((surface, s) => {
    const byCoord = new Map<string, number>();
    for (const p of surface.points) {
      byCoord.set(`${p.a},${p.b}`, p.loss);
    }
    const mesh: string[] = [];
    const lookup = (a: number, b: number): number =>
      byCoord.get(`${a},${b}`) as number;
    for (const a of surface.aValues) {
      mesh.push(
        polyline(
          surface.bValues.map((b) => place(a, b, lookup(a, b))),
          color(s),
          1,
          s === 0 ? 0.9 : 0.65,
        ),
      );
    }
    for (const b of surface.bValues) {
      mesh.push(
        polyline(
          surface.aValues.map((a) => place(a, b, lookup(a, b))),
          color(s),
          1,
          s === 0 ? 0.9 : 0.65,
        ),
      );
    }
    const [cx, cy] = place(0, 0, surface.center.loss);
    mesh.push(
      `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="3.5" fill="${color(s)}" stroke="#111827" stroke-width="1"/>`,
    );
    parts.push(`<g class="surface" data-name="${esc(surface.name)}">\n${mesh.join("\n")}\n</g>`);
  });

  // z reference: the loss range rendered as a small vertical gauge
  const [gx0, gy0] = [frame.left + 8, sy(2 * ISO_Y)];
  const gy1 = sy(2 * ISO_Y - Z_HEIGHT);
  parts.push(
    `<line x1="${fmt(gx0)}" y1="${fmt(gy0)}" x2="${fmt(gx0)}" y2="${fmt(gy1)}" stroke="#374151" stroke-width="1"/>`,
    `<text x="${fmt(gx0 + 4)}" y="${fmt(gy0)}" font-size="9" fill="#374151" ${FONT}>loss ${esc(fmtTick(zLo))}</text>`,
    `<text x="${fmt(gx0 + 4)}" y="${fmt(gy1)}" font-size="9" fill="#374151" ${FONT}>loss ${esc(fmtTick(zHi))}</text>`,
  );

  const centerTexts = surfaces.map(
    (surface, s) =>
      `<text x="${fmt(frame.left)}" y="${fmt(height - 28 + s * 13)}" font-size="10" fill="${color(s)}" ${FONT}>${esc(surface.name)}: center loss = ${esc(surface.center.lossRaw)}</text>`,
  );
  parts.push(...centerTexts);
  parts.push(legend(frame, surfaces.map((surface) => surface.name)));

  const rootAttrs: Record<string, string> = {
    "data-center-loss": surfaces[0]!.center.lossRaw,
  };
  if (surfaces.length === 2) {
    rootAttrs["data-center-loss-2"] = surfaces[1]!.center.lossRaw;
  }
  return document(WIDTH, height, parts.join("\n"), rootAttrs);
}

// ---------------------------------------------------------------------------
// training_curves

export function trainingCurves(runs: RoundsFile[]): string {
  const height = 560;
  const lossFrame: Frame = { left: 64, top: 36, width: WIDTH - 88, height: 210 };
  const accFrame: Frame = { left: 64, top: 306, width: WIDTH - 88, height: 210 };
  const allRows = runs.flatMap((r) => r.rows);
  const [xLo, xHi] = finiteExtent(allRows.map((r) => r.round), "round");
  const [lossLo, lossHi] = finiteExtent(allRows.map((r) => r.trainLossMean), "loss");
  const [accLo, accHi] = finiteExtent(allRows.map((r) => r.testAccConsensus), "accuracy");

  const x1 = linearScale(...padRange(xLo, xHi), lossFrame.left, lossFrame.left + lossFrame.width);
  const yLoss = linearScale(...padRange(lossLo, lossHi), lossFrame.top + lossFrame.height, lossFrame.top);
  const x2 = linearScale(...padRange(xLo, xHi), accFrame.left, accFrame.left + accFrame.width);
  const yAcc = linearScale(...padRange(accLo, accHi), accFrame.top + accFrame.height, accFrame.top);

  const parts: string[] = [
    title(WIDTH, "training curves"),
    axes(lossFrame, x1, yLoss, "round", "train loss (mean)"),
    axes(accFrame, x2, yAcc, "round", "test accuracy (consensus)"),
  ];
  runs.forEach((run, i) => {
    parts.push(
      polyline(run.rows.map((r) => [x1(r.round), yLoss(r.trainLossMean)]), color(i)),
      polyline(run.rows.map((r) => [x2(r.round), yAcc(r.testAccConsensus)]), color(i)),
    );
  });
  parts.push(legend(lossFrame, runs.map((r) => r.name)));
  return document(WIDTH, height, parts.join("\n"));
}
