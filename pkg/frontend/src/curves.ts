// Filter-rate curve handling for the threshold explorer.
//
// The service exports one CSV row per distinct model score: reviewing every
// edit scored at or above `threshold` catches `recall` of the vandalism and
// filters `filterRate` of all edits away from human eyes. The explorer maps
// a slider cutoff onto that curve and presents the review share as the exact
// complement of the filter rate, so the two always sum to one.

export interface CurvePoint {
  recall: number;
  filterRate: number;
  threshold: number;
}

export interface OperatingPoint {
  recall: number;
  filterRate: number;
  reviewFraction: number;
  /** The distinct score that actually bounds the review set, if any. */
  threshold: number | null;
}

export class CurveFormatError extends Error {}

export function parseCurveCsv(text: string): CurvePoint[] {
  const lines = text.split(/\r?\n/).filter((line) => line.trim() !== '');
  if (lines.length === 0) {
    throw new CurveFormatError('curve CSV is empty');
  }
  const header = lines[0]!.split(',').map((col) => col.trim());
  const recallIdx = header.indexOf('recall');
  const filterIdx = header.indexOf('filter_rate');
  const thresholdIdx = header.indexOf('threshold');
  if (recallIdx < 0 || filterIdx < 0 || thresholdIdx < 0) {
    throw new CurveFormatError(`curve CSV header missing columns: ${lines[0]}`);
  }
  const points: CurvePoint[] = [];
  for (const line of lines.slice(1)) {
    const cols = line.split(',');
    const recall = Number(cols[recallIdx]);
    const filterRate = Number(cols[filterIdx]);
    const threshold = Number(cols[thresholdIdx]);
    if (!Number.isFinite(recall) || !Number.isFinite(filterRate) || !Number.isFinite(threshold)) {
      throw new CurveFormatError(`bad curve row: ${line}`);
    }
    points.push({ recall, filterRate, threshold });
  }
  return points;
}

/**
 * The operating point reached by cutting at `slider`.
 *
 * Reviewing {score >= slider} is the same set as {score >= s} where s is the
 * smallest distinct score at or above the slider, so that curve row is the
 * one that describes what the reviewer will actually see. A cutoff above
 * every score reviews nothing: recall 0, everything filtered.
 */
export function operatingPointAt(points: CurvePoint[], slider: number): OperatingPoint {
  let chosen: CurvePoint | null = null;
  for (const point of points) {
    if (point.threshold >= slider && (chosen === null || point.threshold < chosen.threshold)) {
      chosen = point;
    }
  }
  if (chosen === null) {
    return { recall: 0, filterRate: 1, reviewFraction: 0, threshold: null };
  }
  return {
    recall: chosen.recall,
    filterRate: chosen.filterRate,
    reviewFraction: 1 - chosen.filterRate,
    threshold: chosen.threshold,
  };
}

/** The curve point whose recall is closest to `target` (first on ties). */
export function nearestToRecall(points: CurvePoint[], target: number): CurvePoint {
  if (points.length === 0) {
    throw new CurveFormatError('cannot pick a point from an empty curve');
  }
  let best = points[0]!;
  for (const point of points) {
    if (Math.abs(point.recall - target) < Math.abs(best.recall - target)) {
      best = point;
    }
  }
  return best;
}

export function formatPercent(fraction: number, digits = 1): string {
  return `${(fraction * 100).toFixed(digits)}%`;
}
