/**
 * Gaussian kernel density estimate for posterior marginals.
 */

export interface Density {
  x: number[];
  y: number[];
}

export function mean(values: number[]): number {
  let s = 0;
  for (const v of values) s += v;
  return s / values.length;
}

function stddev(values: number[], m: number): number {
  if (values.length < 2) return 0;
  let s = 0;
  for (const v of values) s += (v - m) * (v - m);
  return Math.sqrt(s / (values.length - 1));
}

function quantile(sorted: number[], q: number): number {
  const pos = (sorted.length - 1) * q;
  const base = Math.floor(pos);
  const rest = pos - base;
  if (base + 1 < sorted.length) {
    return sorted[base] + rest * (sorted[base + 1] - sorted[base]);
  }
  return sorted[base];
}

/** Silverman's rule with the usual iqr guard against heavy tails. */
export function bandwidth(values: number[]): number {
  const m = mean(values);
  const sd = stddev(values, m);
  const sorted = [...values].sort((a, b) => a - b);
  const iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const spread = iqr > 0 ? Math.min(sd, iqr / 1.34) : sd;
  if (spread === 0) {
    // near-constant sample: pick a visible but narrow width
    return Math.max(Math.abs(m), 1) * 1e-3;
  }
  return 0.9 * spread * Math.pow(values.length, -0.2);
}

export function kde(values: number[], gridSize = 200): Density {
  if (values.length === 0) {
    throw new Error("cannot estimate a density from no samples");
  }
  const h = bandwidth(values);
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  lo -= 3 * h;
  hi += 3 * h;
  const x: number[] = [];
  const y: number[] = [];
  const norm = 1 / (values.length * h * Math.sqrt(2 * Math.PI));
  for (let i = 0; i < gridSize; i++) {
    const xi = lo + ((hi - lo) * i) / (gridSize - 1);
    let s = 0;
    for (const v of values) {
      const z = (xi - v) / h;
      s += Math.exp(-0.5 * z * z);
    }
    x.push(xi);
    y.push(s * norm);
  }
  return { x, y };
}
