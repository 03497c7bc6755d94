#!/usr/bin/env node
/**
 * Render figures from faultline CSV artifacts.
 *
 *   plot --kind coverage    --in OUT_DIR/stress.csv --out coverage.svg
 *   plot --kind convergence --in mala=a/rounds.csv --in mala=b/rounds.csv \
 *        --in rmh=c/rounds.csv --out convergence.svg
 *
 * Convergence inputs are grouped into series by their `label=` prefix
 * (file stem when omitted); each series draws a median line plus a
 * min/max band across its files.
 */

import { writeFileSync } from "fs";
import { basename } from "path";

import { renderConvergence, Series } from "./convergence.js";
import { renderCoverage } from "./coverage.js";
import { readRoundsCsv, readStressCsv } from "./csv.js";

interface Args {
  kind: string;
  inputs: string[];
  out: string;
  title?: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { kind: "", inputs: [], out: "" };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`missing value after ${a}`);
      return argv[i];
    };
    if (a === "--kind") args.kind = next();
    else if (a === "--in") args.inputs.push(next());
    else if (a === "--out") args.out = next();
    else if (a === "--title") args.title = next();
    else throw new Error(`unknown argument ${a}`);
  }
  if (args.kind !== "coverage" && args.kind !== "convergence") {
    throw new Error("--kind must be coverage or convergence");
  }
  if (args.inputs.length === 0 || !args.out) {
    throw new Error("--in and --out are required");
  }
  return args;
}

function groupSeries(inputs: string[]): Series[] {
  const byLabel = new Map<string, Series>();
  for (const entry of inputs) {
    const eq = entry.indexOf("=");
    const label = eq >= 0 ? entry.slice(0, eq) : basename(entry, ".csv");
    const path = eq >= 0 ? entry.slice(eq + 1) : entry;
    let series = byLabel.get(label);
    if (!series) {
      series = { label, runs: [] };
      byLabel.set(label, series);
    }
    series.runs.push(readRoundsCsv(path));
  }
  return [...byLabel.values()];
}

export function run(argv: string[]): void {
  const args = parseArgs(argv);
  let svg: string;
  if (args.kind === "coverage") {
    if (args.inputs.length !== 1) {
      throw new Error("coverage takes exactly one --in stress.csv");
    }
    svg = renderCoverage(readStressCsv(args.inputs[0]), args.title ?? "Failure coverage");
  } else {
    svg = renderConvergence(groupSeries(args.inputs), args.title ?? "Convergence");
  }
  writeFileSync(args.out, svg);
  console.log(`wrote ${args.out}`);
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(basename(process.argv[1]));
if (isMain) {
  try {
    run(process.argv.slice(2));
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(2);
  }
}
