/**
 * Minimal deterministic SVG construction: fixed styles, fixed palette, no
 * timestamps, stable number formatting. Everything is plain string building;
 * the output depends only on the data handed in.
 */

export const PALETTE = [
  "#1f6feb", // blue
  "#d97706", // orange
  "#059669", // green
  "#dc2626", // red
  "#7c3aed", // violet
  "#0891b2", // cyan
  "#be185d", // pink
  "#4d7c0f", // olive
] as const;

export function color(i: number): string {
  return PALETTE[i % PALETTE.length] as string;
}

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Coordinate formatting: two decimals, no negative zero. */
export function fmt(x: number): string {
  const s = x.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

/** Tick-label formatting: compact, locale-free. */
export function fmtTick(x: number): string {
  if (x === 0) return "0";
  const abs = Math.abs(x);
  if (abs >= 1e5 || abs < 1e-3) {
    return x.toExponential(1).replace("e+", "e");
  }
  return String(Number(x.toPrecision(6)));
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  children?: string,
): string {
  const parts = Object.entries(attrs).map(([k, v]) => `${k}="${v}"`);
  const open = parts.length > 0 ? `<${name} ${parts.join(" ")}` : `<${name}`;
  return children === undefined ? `${open}/>` : `${open}>${children}</${name}>`;
}

export interface Scale {
  (x: number): number;
  domain: [number, number];
}

/** Linear scale mapping [d0, d1] to [r0, r1]; constant domains map to midrange. */
export function linearScale(
  d0: number,
  d1: number,
  r0: number,
  r1: number,
): Scale {
  const span = d1 - d0;
  const scale = ((x: number): number =>
    span === 0 ? (r0 + r1) / 2 : r0 + ((x - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = [d0, d1];
  return scale;
}

/** 1-2-5 tick positions covering [lo, hi], roughly `count` of them. */
export function ticks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) {
    return [lo];
  }
  const rawStep = (hi - lo) / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const mult of [1, 2, 5, 10]) {
    step = mult * mag;
    if (step >= rawStep) break;
  }
  const result: number[] = [];
  const start = Math.ceil(lo / step) * step;
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    result.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return result;
}

/** Pad a [lo, hi] data range so marks don't sit on the frame. */
export function padRange(lo: number, hi: number, frac = 0.05): [number, number] {
  if (lo === hi) {
    const pad = lo === 0 ? 1 : Math.abs(lo) * frac;
    return [lo - pad, hi + pad];
  }
  const pad = (hi - lo) * frac;
  return [lo - pad, hi + pad];
}

export const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

export interface Frame {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Axes, grid lines, and tick labels for one plot frame. */
export function axes(
  frame: Frame,
  xScale: Scale,
  yScale: Scale,
  xLabel: string,
  yLabel: string,
  options?: { xTicks?: number[]; yTicks?: number[] },
): string {
  const { left, top, width, height } = frame;
  const right = left + width;
  const bottom = top + height;
  const xTicks = options?.xTicks ?? ticks(xScale.domain[0], xScale.domain[1], 6);
  const yTicks = options?.yTicks ?? ticks(yScale.domain[0], yScale.domain[1], 5);
  const parts: string[] = [];
  for (const t of yTicks) {
    const y = fmt(yScale(t));
    parts.push(
      `<line x1="${fmt(left)}" y1="${y}" x2="${fmt(right)}" y2="${y}" stroke="#e5e7eb" stroke-width="1"/>`,
      `<text x="${fmt(left - 6)}" y="${y}" dy="0.32em" text-anchor="end" font-size="10" fill="#374151" ${FONT}>${esc(fmtTick(t))}</text>`,
    );
  }
  for (const t of xTicks) {
    const x = fmt(xScale(t));
    parts.push(
      `<line x1="${x}" y1="${fmt(bottom)}" x2="${x}" y2="${fmt(bottom + 4)}" stroke="#374151" stroke-width="1"/>`,
      `<text x="${x}" y="${fmt(bottom + 16)}" text-anchor="middle" font-size="10" fill="#374151" ${FONT}>${esc(fmtTick(t))}</text>`,
    );
  }
  parts.push(
    `<rect x="${fmt(left)}" y="${fmt(top)}" width="${fmt(width)}" height="${fmt(height)}" fill="none" stroke="#374151" stroke-width="1"/>`,
    `<text x="${fmt(left + width / 2)}" y="${fmt(bottom + 32)}" text-anchor="middle" font-size="11" fill="#111827" ${FONT}>${esc(xLabel)}</text>`,
    `<text x="${fmt(left - 44)}" y="${fmt(top + height / 2)}" text-anchor="middle" font-size="11" fill="#111827" ${FONT} transform="rotate(-90 ${fmt(left - 44)} ${fmt(top + height / 2)})">${esc(yLabel)}</text>`,
  );
  return parts.join("\n");
}

/** Color-keyed legend in the top-right corner of a frame. */
export function legend(frame: Frame, labels: string[]): string {
  const parts: string[] = [];
  labels.forEach((label, i) => {
    const y = frame.top + 14 + i * 14;
    const x = frame.left + frame.width - 10;
    parts.push(
      `<line x1="${fmt(x - 110)}" y1="${fmt(y - 3)}" x2="${fmt(x - 92)}" y2="${fmt(y - 3)}" stroke="${color(i)}" stroke-width="2"/>`,
      `<text x="${fmt(x - 88)}" y="${fmt(y)}" font-size="10" fill="#374151" ${FONT}>${esc(label)}</text>`,
    );
  });
  return parts.join("\n");
}

export function title(width: number, text: string): string {
  return `<text x="${fmt(width / 2)}" y="18" text-anchor="middle" font-size="13" fill="#111827" ${FONT}>${esc(text)}</text>`;
}

/** Wrap body markup in a complete standalone SVG document. */
export function document(
  width: number,
  height: number,
  body: string,
  rootAttrs: Record<string, string> = {},
): string {
  const extra = Object.entries(rootAttrs)
    .map(([k, v]) => ` ${k}="${esc(v)}"`)
    .join("");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}"${extra}>\n` +
    `<rect x="0" y="0" width="${width}" height="${height}" fill="#ffffff"/>\n` +
    body +
    "\n</svg>\n"
  );
}

/** Polyline through finite points only; non-finite points break the line. */
export function polyline(
  points: Array<[number, number]>,
  stroke: string,
  strokeWidth = 1.5,
  opacity = 1,
  dash = "",
): string {
  const segments: string[] = [];
  let current: string[] = [];
  for (const [x, y] of points) {
    if (Number.isFinite(x) && Number.isFinite(y)) {
      current.push(`${fmt(x)},${fmt(y)}`);
    } else if (current.length > 0) {
      segments.push(current.join(" "));
      current = [];
    }
  }
  if (current.length > 0) {
    segments.push(current.join(" "));
  }
  const dashAttr = dash === "" ? "" : ` stroke-dasharray="${dash}"`;
  const opacityAttr = opacity === 1 ? "" : ` stroke-opacity="${fmt(opacity)}"`;
  return segments
    .map(
      (pts) =>
        `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${strokeWidth}"${dashAttr}${opacityAttr}/>`,
    )
    .join("\n");
}
