import { describe, expect, it } from 'vitest';

import { ApiError, LabelConflictError, PatrolClient } from '../src/api.js';

interface Recorded {
  url: string;
  init?: RequestInit;
}

function fakeFetch(status: number, body: unknown) {
  const calls: Recorded[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(typeof body === 'string' ? body : JSON.stringify(body), { status });
  };
  return { calls, fetchFn };
}

describe('PatrolClient', () => {
  it('normalizes the base url and hits the right routes', async () => {
    const { calls, fetchFn } = fakeFetch(200, { status: 'ok' });
    const client = new PatrolClient('http://svc:8100///', fetchFn);
    await client.health();
    await client.scoreSingle(77);
    await client.queue(0.5, 2, 10);
    expect(calls.map((c) => c.url)).toEqual([
      'http://svc:8100/v1/health',
      'http://svc:8100/v1/scores/77',
      'http://svc:8100/v1/ui/queue?min_score=0.5&page=2&page_size=10',
    ]);
  });

  it('posts batch scores as an integer id list', async () => {
    const { calls, fetchFn } = fakeFetch(200, { scores: {} });
    const client = new PatrolClient('http://svc:8100', fetchFn);
    await client.scoreBatch([3, 1, 2]);
    expect(calls[0]?.init?.method).toBe('POST');
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({ rev_ids: [3, 1, 2] });
  });

  it('raises ApiError with status and body on failure', async () => {
    const { fetchFn } = fakeFetch(404, { error: 'RevisionNotFound' });
    const client = new PatrolClient('http://svc:8100', fetchFn);
    await expect(client.scoreSingle(1)).rejects.toThrowError(ApiError);
    await expect(client.scoreSingle(1)).rejects.toMatchObject({ status: 404 });
  });

  it('surfaces 409 label races as LabelConflictError with the fresh state', async () => {
    const { fetchFn } = fakeFetch(409, {
      error: 'ConflictingConcurrentLabel',
      current_revision: 2,
      current_class: 'good',
    });
    const client = new PatrolClient('http://svc:8100', fetchFn);
    const submission = { rev_id: 9, class: 'vandalism' as const, reviewer: 'p', expected_revision: 0 };
    await expect(client.submitLabel(submission)).rejects.toThrowError(LabelConflictError);
    await expect(client.submitLabel(submission)).rejects.toMatchObject({
      conflict: { current_revision: 2, current_class: 'good' },
    });
  });

  it('returns the confirmed label event on success', async () => {
    const event = {
      seq: 1,
      rev_id: 9,
      class: 'vandalism',
      reviewer: 'p',
      labeled_at: '2015-03-01T12:00:00Z',
    };
    const { calls, fetchFn } = fakeFetch(200, event);
    const client = new PatrolClient('http://svc:8100', fetchFn);
    const got = await client.submitLabel({
      rev_id: 9,
      class: 'vandalism',
      reviewer: 'p',
      expected_revision: 0,
    });
    expect(got).toEqual(event);
    expect(JSON.parse(String(calls[0]?.init?.body))).toMatchObject({ expected_revision: 0 });
  });

  it('passes curve and export text through untouched', async () => {
    const csv = 'recall,filter_rate,threshold\n0.5,0.9,0.7\n';
    const { fetchFn } = fakeFetch(200, csv);
    const client = new PatrolClient('http://svc:8100', fetchFn);
    expect(await client.curvesCsv()).toBe(csv);
  });
});
