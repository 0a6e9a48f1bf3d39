/**
 * A little SVG scene builder.
 *
 * Figures are trees of plain nodes serialized to text at the end. Drawing
 * elements carry data-layer attributes so tests (and anyone scripting
 * against the output) can assert on what a figure contains without
 * rasterizing it.
 */

export interface SvgNode {
  tag: string;
  attrs: Record<string, string | number>;
  children: SvgNode[];
  text?: string;
}

export function el(
  tag: string,
  attrs: Record<string, string | number> = {},
  children: SvgNode[] = [],
  text?: string,
): SvgNode {
  return { tag, attrs, children, text };
}

function escapeXml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: string | number): string {
  if (typeof value === "number") {
    // trim float noise out of coordinates but keep data-value attrs exact
    return Number.isInteger(value) ? String(value) : value.toFixed(2);
  }
  return value;
}

export function serialize(node: SvgNode, indent = 0): string {
  const pad = "  ".repeat(indent);
  const attrs = Object.entries(node.attrs)
    .map(([k, v]) => ` ${k}="${escapeXml(fmt(v))}"`)
    .join("");
  if (node.children.length === 0 && node.text === undefined) {
    return `${pad}<${node.tag}${attrs}/>`;
  }
  const body =
    node.text !== undefined
      ? escapeXml(node.text)
      : "\n" + node.children.map((c) => serialize(c, indent + 1)).join("\n") + "\n" + pad;
  return `${pad}<${node.tag}${attrs}>${body}</${node.tag}>`;
}

export type Scale = (value: number) => number;

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0;
  if (span === 0) {
    // degenerate domain: pin everything to the middle of the range
    const mid = (r0 + r1) / 2;
    return () => mid;
  }
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

/** Round-numbered tick positions covering [lo, hi]. */
export function ticks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= rawStep) {
      step = m * mag;
      break;
    }
  }
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Number(v.toPrecision(12)));
  }
  return out;
}

export function pathData(xs: number[], ys: number[]): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    parts.push(`${i === 0 ? "M" : "L"}${xs[i].toFixed(2)},${ys[i].toFixed(2)}`);
  }
  return parts.join(" ");
}

/** Closed band between an upper and a lower series, for credible ribbons. */
export function bandData(xs: number[], upper: number[], lower: number[]): string {
  const fwd = pathData(xs, upper);
  const back: string[] = [];
  for (let i = xs.length - 1; i >= 0; i--) {
    back.push(`L${xs[i].toFixed(2)},${lower[i].toFixed(2)}`);
  }
  return `${fwd} ${back.join(" ")} Z`;
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === Infinity) return [0, 1];
  return [lo, hi];
}
