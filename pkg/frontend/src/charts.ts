/**
 * Pure geometry builders for the density curve and boxplot panels.
 *
 * Every builder keeps the backend payload as the verbatim data source (the
 * returned objects reference the payload arrays directly); only pixel
 * placement is computed here.
 */

import type { BoxplotPayload, DensityPoint } from "./api.js";
import { unitToCounts } from "./scale.js";

export interface CurveRender {
  /** The payload rows the curve was drawn from, untransformed. */
  data: DensityPoint[];
  /** SVG path in pixel space. */
  path: string;
  width: number;
  height: number;
  yMax: number;
}

export function densityCurve(
  grid: DensityPoint[],
  width: number,
  height: number,
): CurveRender {
  let yMax = 0;
  for (const [, y] of grid) {
    if (Number.isFinite(y) && y > yMax) yMax = y;
  }
  const scaleY = yMax > 0 ? (height - 2) / yMax : 0;
  const parts: string[] = [];
  grid.forEach(([x, y], i) => {
    const px = x * width;
    const py = height - (Number.isFinite(y) ? y : yMax) * scaleY;
    parts.push(`${i === 0 ? "M" : "L"}${px.toFixed(2)},${py.toFixed(2)}`);
  });
  return { data: grid, path: parts.join(" "), width, height, yMax };
}

export interface MarkerRender {
  /** Marker positions on the counts scale, converted exactly once. */
  lowerPx: number;
  modePx: number;
  upperPx: number;
}

export function tripletMarkers(
  lowerCounts: number,
  modeCounts: number,
  upperCounts: number,
  width: number,
): MarkerRender {
  return {
    lowerPx: (lowerCounts / 100) * width,
    modePx: (modeCounts / 100) * width,
    upperPx: (upperCounts / 100) * width,
  };
}

export interface BoxGlyph {
  /** The payload row this glyph renders, untransformed. */
  summary: BoxplotPayload;
  label: string;
  y: number;
  whiskerLowPx: number;
  boxLeftPx: number;
  medianPx: number;
  boxRightPx: number;
  whiskerHighPx: number;
}

export function boxplotGlyphs(
  summaries: BoxplotPayload[],
  width: number,
  rowHeight: number,
): BoxGlyph[] {
  const px = (p: number) => (unitToCounts(p) / 100) * width;
  return summaries.map((s, i) => ({
    summary: s,
    label: s.label,
    y: i * rowHeight + rowHeight / 2,
    whiskerLowPx: px(s.whisker_low),
    boxLeftPx: px(s.q25),
    medianPx: px(s.median),
    boxRightPx: px(s.q75),
    whiskerHighPx: px(s.whisker_high),
  }));
}
