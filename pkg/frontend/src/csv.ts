/**
 * CSV ingestion for run-directory artifacts.
 *
 * Every loader funnels through readTable so that a malformed file or a
 * missing column always produces an InputError naming the file, which the
 * CLI maps to its bad-input exit code.
 */

import fs from "node:fs";
import Papa from "papaparse";

/** Raised for unreadable files, parse failures, and missing columns. */
export class InputError extends Error {}

export interface Table {
  file: string;
  columns: Record<string, number[]>;
  n: number;
}

export function readTable(file: string): Table {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf8");
  } catch {
    throw new InputError(`${file}: cannot read file`);
  }
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new InputError(`${file}: ${e.message} (row ${e.row ?? "?"})`);
  }
  const names = (parsed.meta.fields ?? []).filter((f) => f.length > 0);
  if (names.length === 0) {
    throw new InputError(`${file}: no header row`);
  }
  const columns: Record<string, number[]> = {};
  for (const name of names) columns[name] = [];
  for (const row of parsed.data) {
    for (const name of names) {
      const raw = (row[name] ?? "").trim();
      columns[name].push(raw === "" ? NaN : Number(raw));
    }
  }
  return { file, columns, n: parsed.data.length };
}

export function requireColumns(table: Table, names: string[]): void {
  for (const name of names) {
    if (!(name in table.columns)) {
      throw new InputError(`${table.file}: missing column '${name}'`);
    }
  }
}

/** First candidate column present in the table; error names them all. */
export function pickColumn(table: Table, candidates: string[]): number[] {
  for (const name of candidates) {
    const col = table.columns[name];
    if (col !== undefined) return col;
  }
  throw new InputError(
    `${table.file}: missing column (expected one of ${candidates.map((c) => `'${c}'`).join(", ")})`,
  );
}
