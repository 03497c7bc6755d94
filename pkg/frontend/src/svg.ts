/**
 * Minimal deterministic SVG scene builder.  Numbers are formatted with a
 * fixed precision so identical inputs always produce identical bytes.
 */

export const WIDTH = 640;
export const HEIGHT = 400;
export const MARGIN = { top: 28, right: 20, bottom: 44, left: 58 };

export function fmt(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`cannot render non-finite coordinate ${x}`);
  }
  const s = x.toFixed(3);
  return s === "-0.000" ? "0.000" : s;
}

export interface Scale {
  (v: number): number;
  domain: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 === 0 ? 1 : d1 - d0;
  const scale = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  scale.domain = domain;
  return scale;
}

/** Round-ish tick positions covering the domain (deterministic). */
export function ticks(domain: [number, number], count = 6): number[] {
  const [lo, hi] = domain;
  if (lo === hi) {
    return [lo];
  }
  const rawStep = (hi - lo) / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const candidates = [1, 2, 5, 10].map((m) => m * mag);
  const step = candidates.find((c) => (hi - lo) / c <= count) ?? candidates[3];
  const start = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    out.push(Number(v.toPrecision(12)));
  }
  return out;
}

export class SvgScene {
  private parts: string[] = [];

  constructor(readonly title: string) {}

  add(fragment: string): void {
    this.parts.push(fragment);
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): void {
    this.add(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" ` +
        `fill="${fill}" fill-opacity="${opacity}"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): void {
    this.add(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
        `stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 2): void {
    const attr = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add(`<polyline points="${attr}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`);
  }

  polygon(points: Array<[number, number]>, fill: string, opacity: number): void {
    const attr = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add(`<polygon points="${attr}" fill="${fill}" fill-opacity="${opacity}"/>`);
  }

  text(x: number, y: number, content: string, anchor = "middle", size = 11): void {
    this.add(
      `<text x="${fmt(x)}" y="${fmt(y)}" text-anchor="${anchor}" ` +
        `font-family="sans-serif" font-size="${size}">${content}</text>`,
    );
  }

  marker(x: number, y: number, cost: number, color: string): void {
    // data-cost carries the exact source value for downstream checks
    this.add(
      `<path d="M ${fmt(x)} ${fmt(y)} l -4 -8 l 8 0 z" fill="${color}" ` +
        `data-cost="${cost}"/>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}">\n` +
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>\n` +
      `<text x="${WIDTH / 2}" y="18" text-anchor="middle" font-family="sans-serif" ` +
      `font-size="13" font-weight="bold">${this.title}</text>\n` +
      this.parts.join("\n") +
      `\n</svg>\n`
    );
  }
}

export function drawAxes(
  scene: SvgScene,
  xScale: Scale,
  yScale: Scale,
  xLabel: string,
  yLabel: string,
  yTickFormat: (v: number) => string = (v) => String(Number(v.toPrecision(6))),
): void {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  scene.line(x0, y0, x1, y0, "#222");
  scene.line(x0, y0, x0, y1, "#222");
  for (const t of ticks(xScale.domain)) {
    const px = xScale(t);
    scene.line(px, y0, px, y0 + 4, "#222");
    scene.text(px, y0 + 16, String(Number(t.toPrecision(6))));
  }
  for (const t of ticks(yScale.domain, 5)) {
    const py = yScale(t);
    scene.line(x0 - 4, py, x0, py, "#222");
    scene.text(x0 - 7, py + 3, yTickFormat(t), "end");
  }
  scene.text((x0 + x1) / 2, HEIGHT - 8, xLabel);
  scene.add(
    `<text x="14" y="${fmt((y0 + y1) / 2)}" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="11" ` +
      `transform="rotate(-90 14 ${fmt((y0 + y1) / 2)})">${yLabel}</text>`,
  );
}
