/**
 * Loaders for the artifacts a run directory contains.
 *
 * The file contracts come from the inference CLI: theta_trace.csv holds one
 * row per iteration with columns iter,sigma,rho,x0,log_lik,accepted; the
 * day summaries (rt_summary.csv, x_summary.csv) hold day,mean,lo,hi rows.
 * Truth overlays accept the simulator's outputs directly (beta_truth.csv
 * with an r_t column, prevalence.csv with a true_x column) or any CSV with
 * a day column plus a value column.
 */

import path from "node:path";

import { InputError, pickColumn, readTable, requireColumns, Table } from "./csv.js";

export interface ThetaTrace {
  sigma: number[];
  rho: number[];
  x0: number[];
  logLik: number[];
}

export interface DaySummary {
  day: number[];
  mean: number[];
  lo: number[];
  hi: number[];
}

export interface Truth {
  table: Table;
  day: number[];
}

export function loadThetaTrace(runDir: string): ThetaTrace {
  const table = readTable(path.join(runDir, "theta_trace.csv"));
  requireColumns(table, ["iter", "sigma", "rho", "x0", "log_lik"]);
  return {
    sigma: table.columns.sigma,
    rho: table.columns.rho,
    x0: table.columns.x0,
    logLik: table.columns.log_lik,
  };
}

export function loadDaySummary(runDir: string, name: string): DaySummary {
  const table = readTable(path.join(runDir, name));
  requireColumns(table, ["day", "mean", "lo", "hi"]);
  if (table.n === 0) {
    throw new InputError(`${table.file}: no data rows`);
  }
  return {
    day: table.columns.day,
    mean: table.columns.mean,
    lo: table.columns.lo,
    hi: table.columns.hi,
  };
}

export function loadTruth(file: string): Truth {
  const table = readTable(file);
  requireColumns(table, ["day"]);
  return { table, day: table.columns.day };
}

/** Truth series for an R_t panel: r_t from the simulator, or a plain value. */
export function rtTruthValues(truth: Truth): number[] {
  return pickColumn(truth.table, ["r_t", "value"]);
}

/** Truth series for a prevalence panel. */
export function prevalenceTruthValues(truth: Truth): number[] {
  return pickColumn(truth.table, ["true_x", "value"]);
}
