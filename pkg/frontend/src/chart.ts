import type { HistorySample } from "./types.js";

export interface ChartBox {
  width: number;
  height: number;
  padding: number;
}

export interface ChartPoint {
  t: number;
  v: number;
}

/** Numeric points of a sample list; booleans chart as 0/1. */
export function chartPoints(samples: ReadonlyArray<HistorySample>): ChartPoint[] {
  const points: ChartPoint[] = [];
  for (const s of samples) {
    if (typeof s.value === "number") points.push({ t: s.scada_ts, v: s.value });
    else if (typeof s.value === "boolean") points.push({ t: s.scada_ts, v: s.value ? 1 : 0 });
  }
  return points;
}

/**
 * SVG path for a sampled series, drawn as horizontal holds with vertical
 * steps at each new sample.  Supervisory data is discrete: a value holds
 * until the next journal entry, so the line must too — no interpolation,
 * no smoothing.
 */
export function stepPath(points: ReadonlyArray<ChartPoint>, box: ChartBox): string {
  if (points.length === 0) return "";
  const { width, height, padding } = box;
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const vs = points.map((p) => p.v);
  let vMin = Math.min(...vs);
  let vMax = Math.max(...vs);
  if (vMin === vMax) {
    // Flat series: widen the band so the line sits mid-chart.
    vMin -= 0.5;
    vMax += 0.5;
  }
  const spanT = t1 === t0 ? 1 : t1 - t0;
  const x = (t: number) => padding + ((t - t0) / spanT) * (width - 2 * padding);
  const y = (v: number) => height - padding - ((v - vMin) / (vMax - vMin)) * (height - 2 * padding);

  const parts: string[] = [`M ${fmt(x(points[0].t))} ${fmt(y(points[0].v))}`];
  for (let i = 1; i < points.length; i++) {
    // Hold the previous value to the new timestamp, then step.
    parts.push(`H ${fmt(x(points[i].t))}`);
    if (points[i].v !== points[i - 1].v) parts.push(`V ${fmt(y(points[i].v))}`);
  }
  return parts.join(" ");
}

const SVG_NS = "http://www.w3.org/2000/svg";

/** Draw a series into an <svg> element, replacing previous content. */
export function renderChart(
  svg: SVGSVGElement,
  samples: ReadonlyArray<HistorySample>,
  box: ChartBox = { width: 720, height: 220, padding: 16 },
): void {
  svg.textContent = "";
  svg.setAttribute("viewBox", `0 0 ${box.width} ${box.height}`);

  const points = chartPoints(samples);
  if (points.length === 0) {
    const empty = document.createElementNS(SVG_NS, "text");
    empty.setAttribute("x", String(box.width / 2));
    empty.setAttribute("y", String(box.height / 2));
    empty.setAttribute("class", "chart-empty");
    empty.setAttribute("text-anchor", "middle");
    empty.textContent = "no samples in window";
    svg.appendChild(empty);
    return;
  }

  const path = document.createElementNS(SVG_NS, "path");
  path.setAttribute("d", stepPath(points, box));
  path.setAttribute("class", "chart-line");
  path.setAttribute("fill", "none");
  svg.appendChild(path);

  const label = document.createElementNS(SVG_NS, "text");
  label.setAttribute("x", String(box.padding));
  label.setAttribute("y", String(box.padding - 4));
  label.setAttribute("class", "chart-range");
  const vs = points.map((p) => p.v);
  label.textContent = `${Math.min(...vs).toPrecision(6)} … ${Math.max(...vs).toPrecision(6)}`;
  svg.appendChild(label);
}

function fmt(n: number): string {
  return Number.isInteger(n) ? String(n) : n.toFixed(2);
}
