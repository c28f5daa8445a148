// Page wiring. All logic worth testing lives in curves.ts and queue.ts;
// this file only moves data between the client and the DOM.

import { PatrolClient, LabelConflictError } from './api.js';
import { formatPercent, operatingPointAt, parseCurveCsv, type CurvePoint } from './curves.js';
import { applyEvent, buildSubmission, REVIEW_CLASSES, sortEntries } from './queue.js';
import type { QueueEntry, ReviewClass } from './types.js';

const SERVICE_URL = new URLSearchParams(location.search).get('service') ?? 'http://127.0.0.1:8100';
const REVIEWER = new URLSearchParams(location.search).get('reviewer') ?? 'patroller';

const client = new PatrolClient(SERVICE_URL);
let curve: CurvePoint[] = [];
let entries: QueueEntry[] = [];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  text?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text !== undefined) node.textContent = text;
  if (className !== undefined) node.className = className;
  return node;
}

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in page`);
  return node;
}

function renderOperatingPoint(slider: number): void {
  const point = operatingPointAt(curve, slider);
  must('cutoff').textContent = slider.toFixed(2);
  must('recall').textContent = formatPercent(point.recall);
  must('filter').textContent = formatPercent(point.filterRate);
  must('review').textContent = formatPercent(point.reviewFraction);
}

function describeUser(entry: QueueEntry): string {
  const tags: string[] = [];
  if (entry.user.is_anonymous) tags.push('anon');
  if (entry.user.is_bot) tags.push('bot');
  if (entry.user.is_admin) tags.push('admin');
  if (entry.user.has_advanced_rights) tags.push('advanced');
  return tags.length ? `${entry.user.name} (${tags.join(', ')})` : entry.user.name;
}

function describeDiff(entry: QueueEntry): string {
  const parts: string[] = [];
  for (const [section, counts] of Object.entries(entry.diff.sections)) {
    const touched = counts.added + counts.removed + counts.changed;
    if (touched > 0) parts.push(`${section} ${touched}`);
  }
  if (entry.diff.is_creation) parts.unshift('creation');
  return parts.join(', ') || 'no structural change';
}

function renderQueue(): void {
  const body = must('queue-body');
  body.replaceChildren();
  for (const entry of sortEntries(entries)) {
    const row = el('tr', undefined, entry.label_state ? 'labeled' : undefined);
    row.append(
      el('td', entry.item_id),
      el('td', String(entry.rev_id)),
      el('td', entry.probability_true.toFixed(3)),
      el('td', describeUser(entry)),
      el('td', describeDiff(entry)),
      el('td', entry.comment),
      el('td', entry.label_state ?? ''),
    );
    const actions = el('td');
    for (const cls of REVIEW_CLASSES) {
      const button = el('button', cls.replace('_', ' '));
      button.addEventListener('click', () => void submit(entry.rev_id, cls));
      actions.append(button);
    }
    row.append(actions);
    body.append(row);
  }
}

async function submit(revId: number, cls: ReviewClass): Promise<void> {
  const entry = entries.find((e) => e.rev_id === revId);
  if (!entry) return;
  try {
    const event = await client.submitLabel(buildSubmission(entry, cls, REVIEWER));
    entries = entries.map((e) => (e.rev_id === revId ? applyEvent(e, event) : e));
    setStatus(`labeled ${revId} as ${cls}`);
  } catch (error) {
    if (error instanceof LabelConflictError) {
      setStatus(`rev ${revId} was already labeled ${error.conflict.current_class}; refreshing`);
      await refreshQueue();
      return;
    }
    setStatus(String(error));
  }
  renderQueue();
}

function setStatus(text: string): void {
  must('status').textContent = text;
}

async function refreshQueue(): Promise<void> {
  const page = await client.queue(0, 0, 100);
  entries = page.items;
  renderQueue();
  setStatus(`${page.total} revisions in queue`);
}

async function start(): Promise<void> {
  try {
    const health = await client.health();
    setStatus(`connected, model ${health.model_version}`);
  } catch (error) {
    setStatus(`service unreachable at ${SERVICE_URL}: ${String(error)}`);
    return;
  }
  try {
    curve = parseCurveCsv(await client.curvesCsv());
  } catch {
    curve = [];
    setStatus('no curve exported; threshold explorer disabled');
  }
  const slider = must('threshold') as HTMLInputElement;
  slider.addEventListener('input', () => renderOperatingPoint(Number(slider.value)));
  renderOperatingPoint(Number(slider.value));
  await refreshQueue();
}

void start();
