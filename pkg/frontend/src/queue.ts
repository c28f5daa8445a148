// Review queue model: ordering, the three review classes, and how they
// collapse to the binary training label when exported back into a corpus.

import type { LabelEvent, QueueEntry, ReviewClass } from './types.js';

export const REVIEW_CLASSES: readonly ReviewClass[] = ['vandalism', 'goodfaith_damaging', 'good'];

export function isReviewClass(value: unknown): value is ReviewClass {
  return typeof value === 'string' && (REVIEW_CLASSES as readonly string[]).includes(value);
}

/** Only outright vandalism trains as positive; damage in good faith does not. */
export function toBinaryLabel(cls: ReviewClass): boolean {
  return cls === 'vandalism';
}

/** Most suspicious first; rev id breaks ties so paging is stable. */
export function compareEntries(a: QueueEntry, b: QueueEntry): number {
  if (a.probability_true !== b.probability_true) {
    return b.probability_true - a.probability_true;
  }
  return a.rev_id - b.rev_id;
}

export function sortEntries(entries: QueueEntry[]): QueueEntry[] {
  return [...entries].sort(compareEntries);
}

export class LabelExportError extends Error {}

/**
 * Parse a label-export JSONL document into the latest class per revision.
 *
 * The export is an append-only event log, so later events supersede earlier
 * ones for the same revision. Any line that is not a well-formed event is an
 * error; the corpus builder downstream trusts this format.
 */
export function parseLabelExport(text: string): Map<number, ReviewClass> {
  const latest = new Map<number, ReviewClass>();
  const lines = text.split(/\r?\n/).filter((line) => line.trim() !== '');
  for (const line of lines) {
    let event: unknown;
    try {
      event = JSON.parse(line);
    } catch {
      throw new LabelExportError(`not JSON: ${line}`);
    }
    if (typeof event !== 'object' || event === null) {
      throw new LabelExportError(`not an event object: ${line}`);
    }
    const revId = (event as Record<string, unknown>)['rev_id'];
    const cls = (event as Record<string, unknown>)['class'];
    if (typeof revId !== 'number' || !Number.isInteger(revId)) {
      throw new LabelExportError(`bad rev_id in: ${line}`);
    }
    if (!isReviewClass(cls)) {
      throw new LabelExportError(`bad class in: ${line}`);
    }
    latest.set(revId, cls);
  }
  return latest;
}

/** Collapse an export to the binary labels the corpus builder will apply. */
export function binaryOverrides(events: Map<number, ReviewClass>): Map<number, boolean> {
  const out = new Map<number, boolean>();
  for (const [revId, cls] of events) {
    out.set(revId, toBinaryLabel(cls));
  }
  return out;
}

export interface LabelSubmission {
  rev_id: number;
  class: ReviewClass;
  reviewer: string;
  expected_revision: number;
}

/**
 * Build the next submission for an entry under optimistic concurrency.
 *
 * `expected_revision` is how many label events the client believes exist for
 * this revision; the server rejects the write with the fresh state when
 * someone else labeled in between.
 */
export function buildSubmission(
  entry: QueueEntry,
  cls: ReviewClass,
  reviewer: string,
): LabelSubmission {
  return {
    rev_id: entry.rev_id,
    class: cls,
    reviewer,
    expected_revision: entry.label_revision,
  };
}

/** Fold a successful label event back into the entry for re-rendering. */
export function applyEvent(entry: QueueEntry, event: LabelEvent): QueueEntry {
  return {
    ...entry,
    label_state: event.class,
    labeled_by: event.reviewer,
    labeled_at: event.labeled_at,
    label_revision: entry.label_revision + 1,
  };
}
