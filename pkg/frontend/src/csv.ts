import { readFileSync } from "fs";
import Papa from "papaparse";

export interface StressRow {
  source: "predicted" | "test";
  index: number;
  cost: number;
}

export interface RoundsData {
  /** one entry per round, from the test_cost column */
  testCosts: number[];
  rounds: number[];
}

function parseTable(path: string): Record<string, string>[] {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new Error(`${path}: CSV parse error at row ${e.row}: ${e.message}`);
  }
  return parsed.data;
}

function requireColumns(path: string, rows: Record<string, string>[], columns: string[]): void {
  if (rows.length === 0) {
    throw new Error(`${path}: no data rows`);
  }
  for (const column of columns) {
    if (!(column in rows[0])) {
      throw new Error(`${path}: missing required column '${column}'`);
    }
  }
}

/** Load a stress.csv artifact (columns: source,index,cost). */
export function readStressCsv(path: string): StressRow[] {
  const rows = parseTable(path);
  requireColumns(path, rows, ["source", "index", "cost"]);
  return rows.map((row) => {
    const source = row.source;
    if (source !== "predicted" && source !== "test") {
      throw new Error(`${path}: unknown source '${source}' (expected predicted|test)`);
    }
    const cost = Number(row.cost);
    if (!Number.isFinite(cost)) {
      throw new Error(`${path}: non-numeric cost '${row.cost}'`);
    }
    return { source, index: Number(row.index), cost };
  });
}

/** Load a rounds.csv artifact; requires the convergence test_cost column. */
export function readRoundsCsv(path: string): RoundsData {
  const rows = parseTable(path);
  requireColumns(path, rows, ["round", "test_cost"]);
  const rounds = rows.map((r) => Number(r.round));
  const testCosts = rows.map((r) => {
    const v = Number(r.test_cost);
    if (!Number.isFinite(v)) {
      throw new Error(`${path}: non-numeric test_cost '${r.test_cost}'`);
    }
    return v;
  });
  return { rounds, testCosts };
}
