import { beforeEach, describe, expect, it, vi } from "vitest";

import { Decision, QueueResponse, ReviewApi, ReviewItem } from "../src/api.js";
import { ReviewQueue } from "../src/queue.js";

function item(id: string): ReviewItem {
  return {
    question_id: id,
    original_text: `original ${id}`,
    refined_text: `refined ${id} with 2011`,
    complexity: 1,
    replacements: [
      {
        original: "2009",
        substitute: "2011",
        fine_type: "year_numerical_value",
        page: 1,
        element_class: "plain_text",
        quadrant: "top_left",
      },
    ],
    pages: [`/api/documents/d1/pages/1/image`],
    decision: null,
  };
}

class FakeApi extends ReviewApi {
  queue: QueueResponse = { items: [], counts: { pending: 0, decided: 0, total: 0 } };
  submitted: Array<{ id: string; decision: Decision }> = [];
  failSubmits = 0;

  override async fetchQueue(): Promise<QueueResponse> {
    return structuredClone(this.queue);
  }

  override async submitDecision(questionId: string, decision: Decision): Promise<void> {
    if (this.failSubmits > 0) {
      this.failSubmits -= 1;
      throw new Error("offline");
    }
    this.submitted.push({ id: questionId, decision });
  }
}

describe("ReviewQueue", () => {
  let api: FakeApi;
  let queue: ReviewQueue;

  beforeEach(async () => {
    api = new FakeApi();
    api.queue = {
      items: [item("q1"), item("q2"), item("q3")],
      counts: { pending: 3, decided: 1, total: 4 },
    };
    queue = new ReviewQueue(api);
    await queue.load();
  });

  it("loads the pending queue and points at the first undecided item", () => {
    expect(queue.position()).toEqual({ index: 1, total: 3 });
    expect(queue.current()?.question_id).toBe("q1");
    expect(queue.totalDecided).toBe(1);
  });

  it("navigates forward and back without losing items", () => {
    queue.next();
    expect(queue.current()?.question_id).toBe("q2");
    queue.previous();
    expect(queue.current()?.question_id).toBe("q1");
    queue.previous();
    expect(queue.current()?.question_id).toBe("q1");
  });

  it("advances optimistically on decide and records the submit", async () => {
    await queue.decide("accept");
    expect(api.submitted).toEqual([{ id: "q1", decision: "accept" }]);
    expect(queue.current()?.question_id).toBe("q2");
    expect(queue.decidedHere).toBe(1);
  });

  it("rolls back and buffers the decision when the submit fails", async () => {
    api.failSubmits = 1;
    await queue.decide("reject");
    expect(queue.current()?.question_id).toBe("q1");
    expect(queue.unsent).toEqual([{ questionId: "q1", decision: "reject", note: "" }]);
    expect(queue.lastError).toContain("kept locally");

    await queue.retryUnsent();
    expect(api.submitted).toEqual([{ id: "q1", decision: "reject" }]);
    expect(queue.unsent).toEqual([]);
    expect(queue.current()?.question_id).toBe("q2");
  });

  it("keeps still-failing decisions buffered after a retry", async () => {
    api.failSubmits = 2;
    await queue.decide("accept");
    await queue.retryUnsent();
    expect(queue.unsent).toHaveLength(1);
    expect(queue.lastError).toContain("unsaved");
  });

  it("reaches completion after deciding everything", async () => {
    await queue.decide("accept");
    await queue.decide("reject");
    await queue.decide("accept");
    expect(queue.current()).toBeNull();
    expect(queue.done).toBe(true);
    expect(api.submitted).toHaveLength(3);
  });

  it("notifies listeners on every state change", async () => {
    const spy = vi.fn();
    queue.onChange(spy);
    queue.next();
    await queue.decide("accept");
    expect(spy.mock.calls.length).toBeGreaterThanOrEqual(2);
  });

  it("surfaces load failures as a banner error, not an exception", async () => {
    const broken = new ReviewQueue(
      new (class extends ReviewApi {
        override async fetchQueue(): Promise<QueueResponse> {
          throw new Error("connection refused");
        }
      })()
    );
    await broken.load();
    expect(broken.lastError).toContain("connection refused");
    expect(broken.items).toEqual([]);
  });
});
