// Wire shapes of the scoring service. Field names mirror the JSON exactly.

export interface HealthInfo {
  status: string;
  model_version: string;
  cache_entries: number;
  queue_size: number;
  precache: string;
}

export interface ScoreEntry {
  rev_id: number;
  probability: { true: number; false: number };
  prediction: boolean;
  source: string;
}

export interface ScoreError {
  error: string;
  detail: string;
}

export interface BatchResponse {
  scores: Record<string, ScoreEntry | ScoreError>;
}

export interface DiffSummary {
  sections: Record<string, { added: number; removed: number; changed: number }>;
  is_creation: boolean;
}

export interface QueueUser {
  name: string;
  is_anonymous: boolean;
  is_bot: boolean;
  is_admin: boolean;
  is_curator: boolean;
  has_advanced_rights: boolean;
}

export interface QueueEntry {
  rev_id: number;
  item_id: string;
  probability_true: number;
  diff: DiffSummary;
  user: QueueUser;
  comment: string;
  timestamp: string;
  label_state: string | null;
  labeled_by: string | null;
  labeled_at: string | null;
  label_revision: number;
}

export interface QueuePage {
  items: QueueEntry[];
  page: number;
  page_size: number;
  total: number;
  has_more: boolean;
}

export type ReviewClass = 'vandalism' | 'goodfaith_damaging' | 'good';

export interface LabelEvent {
  seq: number;
  rev_id: number;
  class: ReviewClass;
  reviewer: string;
  labeled_at: string;
}

export interface LabelConflict {
  error: 'ConflictingConcurrentLabel';
  current_revision: number;
  current_class: ReviewClass;
}

export function isScoreError(entry: ScoreEntry | ScoreError): entry is ScoreError {
  return 'error' in entry;
}
