import { describe, expect, it } from 'vitest';

import {
  applyEvent,
  binaryOverrides,
  buildSubmission,
  compareEntries,
  LabelExportError,
  parseLabelExport,
  REVIEW_CLASSES,
  sortEntries,
  toBinaryLabel,
} from '../src/queue.js';
import type { LabelEvent, QueueEntry } from '../src/types.js';

function entry(revId: number, probability: number, labelRevision = 0): QueueEntry {
  return {
    rev_id: revId,
    item_id: `Q${revId}`,
    probability_true: probability,
    diff: { sections: { labels: { added: 1, removed: 0, changed: 0 } }, is_creation: false },
    user: {
      name: '198.51.100.7',
      is_anonymous: true,
      is_bot: false,
      is_admin: false,
      is_curator: false,
      has_advanced_rights: false,
    },
    comment: '',
    timestamp: '2015-03-01T12:00:00Z',
    label_state: null,
    labeled_by: null,
    labeled_at: null,
    label_revision: labelRevision,
  };
}

describe('queue ordering', () => {
  it('sorts by descending probability with rev id breaking ties', () => {
    const shuffled = [entry(5, 0.2), entry(3, 0.9), entry(4, 0.9), entry(1, 0.5)];
    expect(sortEntries(shuffled).map((e) => e.rev_id)).toEqual([3, 4, 1, 5]);
  });

  it('is antisymmetric', () => {
    const a = entry(1, 0.7);
    const b = entry(2, 0.7);
    expect(compareEntries(a, b)).toBeLessThan(0);
    expect(compareEntries(b, a)).toBeGreaterThan(0);
    expect(compareEntries(a, a)).toBe(0);
  });
});

describe('label classes', () => {
  it('collapses three review classes to the binary training label', () => {
    expect(REVIEW_CLASSES).toEqual(['vandalism', 'goodfaith_damaging', 'good']);
    expect(toBinaryLabel('vandalism')).toBe(true);
    expect(toBinaryLabel('goodfaith_damaging')).toBe(false);
    expect(toBinaryLabel('good')).toBe(false);
  });
});

describe('parseLabelExport', () => {
  const line = (seq: number, revId: number, cls: string) =>
    JSON.stringify({
      seq,
      rev_id: revId,
      class: cls,
      reviewer: 'patroller-7',
      labeled_at: '2015-03-01T12:00:00Z',
    });

  it('keeps the latest event per revision', () => {
    const text = [line(1, 10, 'good'), line(2, 11, 'vandalism'), line(3, 10, 'vandalism')].join('\n');
    const parsed = parseLabelExport(text);
    expect(parsed.size).toBe(2);
    expect(parsed.get(10)).toBe('vandalism');
    expect(parsed.get(11)).toBe('vandalism');
  });

  it('round-trips into binary corpus overrides', () => {
    const text = [line(1, 10, 'good'), line(2, 11, 'vandalism'), line(3, 12, 'goodfaith_damaging')].join('\n');
    const overrides = binaryOverrides(parseLabelExport(text));
    expect(overrides.get(10)).toBe(false);
    expect(overrides.get(11)).toBe(true);
    expect(overrides.get(12)).toBe(false);
  });

  it('accepts blank lines but nothing malformed', () => {
    expect(parseLabelExport('\n\n').size).toBe(0);
    expect(() => parseLabelExport('not json')).toThrow(LabelExportError);
    expect(() => parseLabelExport('[1,2]')).toThrow(LabelExportError);
    expect(() => parseLabelExport(JSON.stringify({ rev_id: 'ten', class: 'good' }))).toThrow(
      LabelExportError,
    );
    expect(() => parseLabelExport(JSON.stringify({ rev_id: 10, class: 'terrible' }))).toThrow(
      LabelExportError,
    );
  });
});

describe('optimistic concurrency helpers', () => {
  it('builds a submission carrying the known label revision', () => {
    const submission = buildSubmission(entry(42, 0.8, 3), 'vandalism', 'patroller-7');
    expect(submission).toEqual({
      rev_id: 42,
      class: 'vandalism',
      reviewer: 'patroller-7',
      expected_revision: 3,
    });
  });

  it('applies a confirmed event and bumps the revision', () => {
    const event: LabelEvent = {
      seq: 9,
      rev_id: 42,
      class: 'good',
      reviewer: 'patroller-7',
      labeled_at: '2015-03-01T12:34:56Z',
    };
    const updated = applyEvent(entry(42, 0.8, 3), event);
    expect(updated.label_state).toBe('good');
    expect(updated.labeled_by).toBe('patroller-7');
    expect(updated.label_revision).toBe(4);
    expect(updated.rev_id).toBe(42);
  });
});
