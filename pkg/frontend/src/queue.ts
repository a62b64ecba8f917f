// Review queue state: one undecided item at a time, optimistic decisions
// with rollback, and a client-side retry buffer so no decision is lost.

import { Decision, ReviewApi, ReviewItem } from "./api.js";

export interface PendingDecision {
  questionId: string;
  decision: Decision;
  note: string;
}

export type QueueListener = () => void;

export class ReviewQueue {
  items: ReviewItem[] = [];
  cursor = 0;
  decidedHere = 0;
  totalDecided = 0;
  total = 0;
  reviewer = "";
  lastError: string | null = null;
  // Decisions that failed to reach the server; retried on demand.
  unsent: PendingDecision[] = [];

  private listeners: QueueListener[] = [];

  constructor(private readonly api: ReviewApi) {}

  onChange(listener: QueueListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async load(): Promise<void> {
    try {
      const queue = await this.api.fetchQueue();
      // The server filters to undecided items, so a reload resumes at the
      // first item still pending.
      this.items = queue.items;
      this.total = queue.counts.total;
      this.totalDecided = queue.counts.decided;
      this.cursor = 0;
      this.lastError = null;
    } catch (err) {
      this.lastError = String(err);
    }
    this.emit();
  }

  current(): ReviewItem | null {
    return this.items[this.cursor] ?? null;
  }

  get remaining(): number {
    return this.items.length - this.cursor;
  }

  get done(): boolean {
    return this.items.length > 0 || this.total > 0 ? this.cursor >= this.items.length : false;
  }

  /** 1-based position for the "i / n" counter over this session's queue. */
  position(): { index: number; total: number } {
    return { index: Math.min(this.cursor + 1, this.items.length), total: this.items.length };
  }

  next(): void {
    if (this.cursor < this.items.length) {
      this.cursor += 1;
      this.emit();
    }
  }

  previous(): void {
    if (this.cursor > 0) {
      this.cursor -= 1;
      this.emit();
    }
  }

  async decide(decision: Decision, note = ""): Promise<void> {
    const item = this.current();
    if (!item) return;
    // Optimistic advance; rolled back if the server rejects the submit.
    this.cursor += 1;
    this.decidedHere += 1;
    this.totalDecided += 1;
    this.lastError = null;
    this.emit();
    try {
      await this.api.submitDecision(item.question_id, decision, this.reviewer, note);
    } catch (err) {
      this.cursor -= 1;
      this.decidedHere -= 1;
      this.totalDecided -= 1;
      this.unsent.push({ questionId: item.question_id, decision, note });
      this.lastError = `decision not saved (${String(err)}); kept locally, use retry`;
      this.emit();
    }
  }

  /** Re-send decisions that previously failed; keeps whatever still fails. */
  async retryUnsent(): Promise<void> {
    const pending = this.unsent;
    this.unsent = [];
    for (const p of pending) {
      try {
        await this.api.submitDecision(p.questionId, p.decision, this.reviewer, p.note);
        this.decidedHere += 1;
        this.totalDecided += 1;
        if (this.items[this.cursor]?.question_id === p.questionId) this.cursor += 1;
      } catch {
        this.unsent.push(p);
      }
    }
    this.lastError = this.unsent.length ? "some decisions are still unsaved" : null;
    this.emit();
  }
}
