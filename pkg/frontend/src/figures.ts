/**
 * The five figure kinds.
 *
 * Every drawing element that represents data carries a data-layer
 * attribute (trace, density, mean, ci, truth, observed) so the content of
 * a rendered figure can be checked from its serialized form.
 */

import fs from "node:fs";
import path from "node:path";

import { InputError } from "./csv.js";
import { kde, mean } from "./density.js";
import {
  DaySummary,
  loadDaySummary,
  loadThetaTrace,
  loadTruth,
  prevalenceTruthValues,
  rtTruthValues,
  Truth,
} from "./run.js";
import {
  bandData,
  el,
  extent,
  linearScale,
  pathData,
  Scale,
  serialize,
  SvgNode,
  ticks,
} from "./svg.js";

export const FIGURE_KINDS = [
  "trace",
  "density",
  "rt_ribbon",
  "prevalence_ribbon",
  "comparison_overlay",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

const MEAN_COLOR = "#1f6fb2";
const CI_FILL = "#a8cbe4";
const TRUTH_COLOR = "#c0392b";
const TRACE_COLOR = "#555555";

const PANEL_W = 640;
const PANEL_H = 240;
const MARGIN = { top: 30, right: 18, bottom: 40, left: 62 };
const GAP = 18;

interface Panel {
  g: SvgNode;
  sx: Scale;
  sy: Scale;
}

function pad(domain: [number, number], frac = 0.05): [number, number] {
  let [lo, hi] = domain;
  if (lo === hi) {
    const d = Math.max(1, Math.abs(lo)) * 0.1;
    return [lo - d, hi + d];
  }
  const d = (hi - lo) * frac;
  return [lo - d, hi + d];
}

function makePanel(
  row: number,
  title: string,
  xDomain: [number, number],
  yDomain: [number, number],
  xLabel: string,
  yLabel: string,
): Panel {
  const top = row * (PANEL_H + GAP);
  const x0 = MARGIN.left;
  const x1 = PANEL_W - MARGIN.right;
  const y0 = top + PANEL_H - MARGIN.bottom;
  const y1 = top + MARGIN.top;
  const sx = linearScale(xDomain[0], xDomain[1], x0, x1);
  const sy = linearScale(yDomain[0], yDomain[1], y0, y1);

  const children: SvgNode[] = [
    el("rect", {
      x: x0,
      y: y1,
      width: x1 - x0,
      height: y0 - y1,
      fill: "none",
      stroke: "#888888",
    }),
    el("text", { x: x0, y: y1 - 8, "font-size": 13, "font-weight": "bold" }, [], title),
    el(
      "text",
      { x: (x0 + x1) / 2, y: top + PANEL_H - 8, "text-anchor": "middle" },
      [],
      xLabel,
    ),
    el(
      "text",
      {
        x: 14,
        y: (y0 + y1) / 2,
        "text-anchor": "middle",
        transform: `rotate(-90 14 ${((y0 + y1) / 2).toFixed(2)})`,
      },
      [],
      yLabel,
    ),
  ];
  for (const t of ticks(xDomain[0], xDomain[1])) {
    const px = sx(t);
    children.push(el("line", { x1: px, y1: y0, x2: px, y2: y0 + 4, stroke: "#888888" }));
    children.push(
      el("text", { x: px, y: y0 + 16, "text-anchor": "middle", "font-size": 10 }, [], trimNum(t)),
    );
  }
  for (const t of ticks(yDomain[0], yDomain[1])) {
    const py = sy(t);
    children.push(el("line", { x1: x0 - 4, y1: py, x2: x0, y2: py, stroke: "#888888" }));
    children.push(
      el(
        "text",
        { x: x0 - 7, y: py + 3, "text-anchor": "end", "font-size": 10 },
        [],
        trimNum(t),
      ),
    );
  }
  return { g: el("g", { "data-panel": title }, children), sx, sy };
}

function trimNum(v: number): string {
  const s = String(v);
  return s.length <= 8 ? s : v.toPrecision(4);
}

function svgRoot(rows: number, panels: SvgNode[]): SvgNode {
  const height = rows * (PANEL_H + GAP) - GAP;
  return el(
    "svg",
    {
      xmlns: "http://www.w3.org/2000/svg",
      width: PANEL_W,
      height,
      viewBox: `0 0 ${PANEL_W} ${height}`,
      "font-family": "sans-serif",
      "font-size": 11,
    },
    [el("rect", { x: 0, y: 0, width: PANEL_W, height, fill: "#ffffff" }), ...panels],
  );
}

// ---------------------------------------------------------------------------
// per-kind builders

function tracePanel(row: number, name: string, values: number[]): SvgNode {
  const iters = values.map((_, i) => i + 1);
  const p = makePanel(row, name, [1, Math.max(2, values.length)], pad(extent(values)), "iteration", name);
  p.g.children.push(
    el("path", {
      d: pathData(iters.map(p.sx), values.map(p.sy)),
      fill: "none",
      stroke: TRACE_COLOR,
      "stroke-width": 1,
      "data-layer": "trace",
      "data-series": name,
    }),
  );
  return p.g;
}

export function traceFigure(runDir: string): SvgNode {
  const t = loadThetaTrace(runDir);
  const panels = [
    tracePanel(0, "sigma", t.sigma),
    tracePanel(1, "rho", t.rho),
    tracePanel(2, "x0", t.x0),
    tracePanel(3, "log likelihood", t.logLik),
  ];
  return svgRoot(4, panels);
}

/** One marginal density panel with a dashed posterior-mean line. */
export function densityPanel(row: number, name: string, samples: number[]): SvgNode {
  const d = kde(samples);
  const m = mean(samples);
  const p = makePanel(row, name, pad(extent(d.x), 0), pad([0, Math.max(...d.y)], 0.05), name, "density");
  const xs = d.x.map(p.sx);
  const ys = d.y.map(p.sy);
  const base = p.sy(0);
  p.g.children.push(
    el("path", {
      d: `${pathData(xs, ys)} L${xs[xs.length - 1].toFixed(2)},${base.toFixed(2)} L${xs[0].toFixed(2)},${base.toFixed(2)} Z`,
      fill: CI_FILL,
      "fill-opacity": 0.45,
      stroke: MEAN_COLOR,
      "stroke-width": 1.2,
      "data-layer": "density",
      "data-series": name,
    }),
    el("line", {
      x1: p.sx(m),
      y1: base,
      x2: p.sx(m),
      y2: p.sy(Math.max(...d.y)),
      stroke: "#333333",
      "stroke-dasharray": "5,3",
      "data-layer": "mean",
      "data-value": String(m),
    }),
  );
  return p.g;
}

export function densityFigure(runDir: string): SvgNode {
  const t = loadThetaTrace(runDir);
  const panels = [
    densityPanel(0, "sigma", t.sigma),
    densityPanel(1, "rho", t.rho),
    densityPanel(2, "x0", t.x0),
  ];
  return svgRoot(3, panels);
}

function ribbonPanel(
  row: number,
  title: string,
  yLabel: string,
  s: DaySummary,
  truthDay?: number[],
  truthValues?: number[],
): SvgNode {
  const yAll = [...s.lo, ...s.hi, ...s.mean, ...(truthValues ?? [])];
  const p = makePanel(
    row,
    title,
    extent(s.day),
    pad(extent(yAll)),
    "day",
    yLabel,
  );
  const xs = s.day.map(p.sx);
  p.g.children.push(
    el("path", {
      d: bandData(xs, s.hi.map(p.sy), s.lo.map(p.sy)),
      fill: CI_FILL,
      "fill-opacity": 0.55,
      stroke: "none",
      "data-layer": "ci",
    }),
    el("path", {
      d: pathData(xs, s.hi.map(p.sy)),
      fill: "none",
      stroke: MEAN_COLOR,
      "stroke-width": 1,
      "stroke-dasharray": "4,3",
      "data-layer": "ci",
      "data-bound": "upper",
    }),
    el("path", {
      d: pathData(xs, s.lo.map(p.sy)),
      fill: "none",
      stroke: MEAN_COLOR,
      "stroke-width": 1,
      "stroke-dasharray": "4,3",
      "data-layer": "ci",
      "data-bound": "lower",
    }),
    el("path", {
      d: pathData(xs, s.mean.map(p.sy)),
      fill: "none",
      stroke: MEAN_COLOR,
      "stroke-width": 1.8,
      "data-layer": "mean",
    }),
  );
  if (truthDay !== undefined && truthValues !== undefined) {
    p.g.children.push(
      el("path", {
        d: pathData(truthDay.map(p.sx), truthValues.map(p.sy)),
        fill: "none",
        stroke: TRUTH_COLOR,
        "stroke-width": 1.5,
        "data-layer": "truth",
      }),
    );
  }
  return p.g;
}

export function rtRibbonFigure(runDir: string, truthFile?: string): SvgNode {
  const s = loadDaySummary(runDir, "rt_summary.csv");
  let truth: Truth | undefined;
  let tv: number[] | undefined;
  if (truthFile !== undefined) {
    truth = loadTruth(truthFile);
    tv = rtTruthValues(truth);
  }
  return svgRoot(1, [ribbonPanel(0, "Reproduction number", "R_t", s, truth?.day, tv)]);
}

export function prevalenceRibbonFigure(runDir: string, truthFile?: string): SvgNode {
  const s = loadDaySummary(runDir, "x_summary.csv");
  let truth: Truth | undefined;
  let tv: number[] | undefined;
  if (truthFile !== undefined) {
    truth = loadTruth(truthFile);
    tv = prevalenceTruthValues(truth);
  }
  return svgRoot(1, [ribbonPanel(0, "Prevalence", "infected", s, truth?.day, tv)]);
}

/**
 * R_t and prevalence ribbons stacked on a shared day axis. A truth file
 * overlays whichever panels it has columns for; it must cover at least one.
 */
export function comparisonOverlayFigure(runDir: string, truthFile?: string): SvgNode {
  const rt = loadDaySummary(runDir, "rt_summary.csv");
  const xs = loadDaySummary(runDir, "x_summary.csv");
  let truth: Truth | undefined;
  let rtTruth: number[] | undefined;
  let xTruth: number[] | undefined;
  if (truthFile !== undefined) {
    truth = loadTruth(truthFile);
    try {
      rtTruth = rtTruthValues(truth);
    } catch (e) {
      if (!(e instanceof InputError)) throw e;
    }
    try {
      xTruth = prevalenceTruthValues(truth);
    } catch (e) {
      if (!(e instanceof InputError)) throw e;
    }
    if (rtTruth === undefined && xTruth === undefined) {
      throw new InputError(
        `${truthFile}: missing column (expected 'r_t', 'true_x', or 'value')`,
      );
    }
  }
  return svgRoot(2, [
    ribbonPanel(0, "Reproduction number", "R_t", rt, truth?.day, rtTruth),
    ribbonPanel(1, "Prevalence", "infected", xs, truth?.day, xTruth),
  ]);
}

// ---------------------------------------------------------------------------
// entry point

export interface PlotRequest {
  runDir: string;
  kind: FigureKind;
  outPath: string;
  truthFile?: string;
  overwrite?: boolean;
}

export function buildFigure(req: PlotRequest): SvgNode {
  switch (req.kind) {
    case "trace":
      return traceFigure(req.runDir);
    case "density":
      return densityFigure(req.runDir);
    case "rt_ribbon":
      return rtRibbonFigure(req.runDir, req.truthFile);
    case "prevalence_ribbon":
      return prevalenceRibbonFigure(req.runDir, req.truthFile);
    case "comparison_overlay":
      return comparisonOverlayFigure(req.runDir, req.truthFile);
  }
}

export class OutputExistsError extends Error {}

/** Build the figure and write it; refuses to clobber without overwrite. */
export function render(req: PlotRequest): string {
  if (!req.overwrite && fs.existsSync(req.outPath)) {
    throw new OutputExistsError(
      `${req.outPath}: output exists (pass --overwrite to replace it)`,
    );
  }
  const text = serialize(buildFigure(req)) + "\n";
  const dir = path.dirname(req.outPath);
  if (dir !== "") fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(req.outPath, text);
  return text;
}
