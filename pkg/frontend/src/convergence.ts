import { RoundsData } from "./csv.js";
import { HEIGHT, MARGIN, SvgScene, WIDTH, drawAxes, linearScale } from "./svg.js";

const PALETTE = ["#d97a28", "#3b6fb5", "#3f9d4f", "#8755b5", "#b53b64"];

export interface Series {
  label: string;
  runs: RoundsData[];
}

interface Band {
  median: number[];
  lo: number[];
  hi: number[];
}

function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 === 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

function summarize(series: Series): Band {
  const k = series.runs[0].testCosts.length;
  for (const run of series.runs) {
    if (run.testCosts.length !== k) {
      throw new Error(
        `series '${series.label}': mismatched round counts ` +
          `(${run.testCosts.length} vs ${k})`,
      );
    }
  }
  const med: number[] = [];
  const lo: number[] = [];
  const hi: number[] = [];
  for (let i = 0; i < k; i++) {
    const col = series.runs.map((r) => r.testCosts[i]);
    med.push(median(col));
    lo.push(Math.min(...col));
    hi.push(Math.max(...col));
  }
  return { median: med, lo, hi };
}

/**
 * Per-method convergence curves: median test-set cost per round with a
 * min/max band across seeds (omitted when a method has a single run).
 */
export function renderConvergence(series: Series[], title = "Convergence"): string {
  if (series.length === 0 || series.some((s) => s.runs.length === 0)) {
    throw new Error("need at least one rounds file per series");
  }
  const bands = series.map(summarize);
  const k = Math.max(...series.map((s) => s.runs[0].testCosts.length));
  const allValues = bands.flatMap((b) => b.lo.concat(b.hi));
  const lo = Math.min(...allValues);
  const hi = Math.max(...allValues);
  const pad = lo === hi ? 0.5 : (hi - lo) * 0.05;

  const xScale = linearScale([1, k], [MARGIN.left, WIDTH - MARGIN.right]);
  const yScale = linearScale([lo - pad, hi + pad], [HEIGHT - MARGIN.bottom, MARGIN.top]);

  const scene = new SvgScene(title);
  drawAxes(scene, xScale, yScale, "round", "test-set cost");

  series.forEach((s, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const band = bands[idx];
    const rounds = band.median.map((_, i) => i + 1);
    if (s.runs.length > 1) {
      const upper = rounds.map((r, i) => [xScale(r), yScale(band.hi[i])] as [number, number]);
      const lower = rounds
        .map((r, i) => [xScale(r), yScale(band.lo[i])] as [number, number])
        .reverse();
      scene.polygon(upper.concat(lower), color, 0.18);
    }
    scene.polyline(
      rounds.map((r, i) => [xScale(r), yScale(band.median[i])] as [number, number]),
      color,
    );
    const ly = MARGIN.top + 8 + idx * 16;
    scene.line(WIDTH - 190, ly, WIDTH - 166, ly, color, 3);
    scene.text(WIDTH - 160, ly + 4, s.label, "start");
  });

  return scene.render();
}
