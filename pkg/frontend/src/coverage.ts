import { StressRow } from "./csv.js";
import { HEIGHT, MARGIN, SvgScene, WIDTH, drawAxes, linearScale } from "./svg.js";

const TEST_COLOR = "#3b6fb5";
const PREDICTED_COLOR = "#c23b3b";
const N_BINS = 40;

interface Histogram {
  edges: number[];
  counts: number[];
}

function histogram(values: number[], lo: number, hi: number, bins: number): Histogram {
  const span = hi - lo === 0 ? 1 : hi - lo;
  const counts = new Array<number>(bins).fill(0);
  for (const v of values) {
    let k = Math.floor(((v - lo) / span) * bins);
    if (k === bins) k = bins - 1; // right edge inclusive
    counts[k] += 1;
  }
  const edges = Array.from({ length: bins + 1 }, (_, i) => lo + (span * i) / bins);
  return { edges, counts };
}

/**
 * Overlaid histograms of test-set costs (blue) and predicted-failure costs
 * (red) with one triangular marker per predicted failure.  The count axis is
 * log-scaled so the tail stays visible next to the bulk.
 */
export function renderCoverage(rows: StressRow[], title = "Failure coverage"): string {
  const testCosts = rows.filter((r) => r.source === "test").map((r) => r.cost);
  const predicted = rows.filter((r) => r.source === "predicted").map((r) => r.cost);
  if (testCosts.length === 0) {
    throw new Error("stress data holds no 'test' rows");
  }
  const all = testCosts.concat(predicted);
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const pad = lo === hi ? 0.5 : (hi - lo) * 0.02;

  const testHist = histogram(testCosts, lo - pad, hi + pad, N_BINS);
  const predHist = histogram(predicted, lo - pad, hi + pad, N_BINS);
  const logMax = Math.log10(1 + Math.max(...testHist.counts, ...predHist.counts, 1));

  const xScale = linearScale([lo - pad, hi + pad], [MARGIN.left, WIDTH - MARGIN.right]);
  const yScale = linearScale([0, logMax], [HEIGHT - MARGIN.bottom, MARGIN.top]);

  const scene = new SvgScene(title);
  drawAxes(scene, xScale, yScale, "cost", "count (log10 scale)", (v) => {
    const count = Math.pow(10, v) - 1;
    return String(Number(count.toPrecision(3)));
  });

  const baseline = HEIGHT - MARGIN.bottom;
  const drawBars = (hist: Histogram, color: string, opacity: number) => {
    for (let k = 0; k < hist.counts.length; k++) {
      if (hist.counts[k] === 0) continue;
      const x0 = xScale(hist.edges[k]);
      const x1 = xScale(hist.edges[k + 1]);
      const top = yScale(Math.log10(1 + hist.counts[k]));
      scene.rect(x0, top, x1 - x0, baseline - top, color, opacity);
    }
  };
  drawBars(testHist, TEST_COLOR, 0.75);
  drawBars(predHist, PREDICTED_COLOR, 0.6);

  for (const cost of predicted) {
    scene.marker(xScale(cost), baseline - 1, cost, PREDICTED_COLOR);
  }

  // legend
  scene.rect(WIDTH - 190, MARGIN.top + 4, 12, 12, TEST_COLOR, 0.75);
  scene.text(WIDTH - 172, MARGIN.top + 14, "random test costs", "start");
  scene.rect(WIDTH - 190, MARGIN.top + 22, 12, 12, PREDICTED_COLOR, 0.6);
  scene.text(WIDTH - 172, MARGIN.top + 32, "predicted failures", "start");

  return scene.render();
}
