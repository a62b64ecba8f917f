// Typed client for the review HTTP API served by `uqbench review-serve`.

export interface ReplacementView {
  original: string;
  substitute: string;
  fine_type: string;
  page: number;
  element_class: string;
  quadrant: string;
}

export interface ReviewItem {
  question_id: string;
  original_text: string;
  refined_text: string;
  complexity: number;
  replacements: ReplacementView[];
  pages: string[];
  decision: string | null;
}

export interface QueueCounts {
  pending: number;
  decided: number;
  total: number;
}

export interface QueueResponse {
  items: ReviewItem[];
  counts: QueueCounts;
}

export type Decision = "accept" | "reject";

export class ReviewApi {
  constructor(private readonly base: string = "") {}

  async fetchQueue(): Promise<QueueResponse> {
    const r = await fetch(`${this.base}/api/review/queue`);
    if (!r.ok) throw new Error(`queue fetch failed: HTTP ${r.status}`);
    return r.json();
  }

  async submitDecision(
    questionId: string,
    decision: Decision,
    reviewer: string,
    note = ""
  ): Promise<void> {
    const r = await fetch(`${this.base}/api/review/${encodeURIComponent(questionId)}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision, reviewer, note }),
    });
    if (r.status !== 204) throw new Error(`decision submit failed: HTTP ${r.status}`);
  }

  imageUrl(path: string): string {
    return `${this.base}${path}`;
  }
}
