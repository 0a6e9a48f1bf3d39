export { InputError, pickColumn, readTable, requireColumns } from "./csv.js";
export { bandwidth, kde, mean } from "./density.js";
export {
  buildFigure,
  comparisonOverlayFigure,
  densityFigure,
  densityPanel,
  FIGURE_KINDS,
  OutputExistsError,
  prevalenceRibbonFigure,
  render,
  rtRibbonFigure,
  traceFigure,
} from "./figures.js";
export type { FigureKind, PlotRequest } from "./figures.js";
export { loadDaySummary, loadThetaTrace, loadTruth } from "./run.js";
export { el, serialize } from "./svg.js";
export type { SvgNode } from "./svg.js";
