// @vitest-environment happy-dom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../src/api.js";
import { createApp } from "../src/app.js";

const QUEUE = {
  items: [
    {
      question_id: "q1_c1",
      original_text: "Was it built in 2009?",
      refined_text: "Was it built in 2011?",
      complexity: 1,
      replacements: [
        {
          original: "2009",
          substitute: "2011",
          fine_type: "year_numerical_value",
          page: 2,
          element_class: "plain_text",
          quadrant: "top_left",
        },
      ],
      pages: ["/api/documents/d1/pages/1/image", "/api/documents/d1/pages/2/image"],
      decision: null,
    },
    {
      question_id: "q2_c1",
      original_text: "Did Globex open in Oslo?",
      refined_text: "Did Initech open in Oslo?",
      complexity: 1,
      replacements: [
        {
          original: "Globex",
          substitute: "Initech",
          fine_type: "company_name",
          page: 1,
          element_class: "title",
          quadrant: "top_right",
        },
      ],
      pages: ["/api/documents/d2/pages/1/image"],
      decision: null,
    },
    {
      question_id: "q3_c1",
      original_text: "o",
      refined_text: "r 1999",
      complexity: 1,
      replacements: [
        {
          original: "1998",
          substitute: "1999",
          fine_type: "year_numerical_value",
          page: 1,
          element_class: "abandon",
          quadrant: "bottom_left",
        },
      ],
      pages: ["/api/documents/d3/pages/1/image"],
      decision: null,
    },
  ],
  counts: { pending: 3, decided: 0, total: 3 },
};

function mockFetch() {
  const posts: Array<{ url: string; body: any }> = [];
  const fetcher = vi.fn(async (url: string | URL, init?: RequestInit) => {
    const path = String(url);
    if (path.endsWith("/api/review/queue")) {
      return new Response(JSON.stringify(QUEUE), { status: 200 });
    }
    if (init?.method === "POST") {
      posts.push({ url: path, body: JSON.parse(String(init.body)) });
      return new Response(null, { status: 204 });
    }
    return new Response("not found", { status: 404 });
  });
  vi.stubGlobal("fetch", fetcher);
  return posts;
}

describe("review app DOM", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
  });

  it("renders the counter and the first item", async () => {
    mockFetch();
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    expect(root.querySelector("#counter")?.textContent).toBe("1 / 3");
    expect(root.textContent).toContain("Was it built in");
    const highlighted = [...root.querySelectorAll(".entity")].map((n) => n.textContent);
    expect(highlighted).toContain("2011");
    const images = [...root.querySelectorAll("img")].map((img) => img.getAttribute("src"));
    expect(images).toEqual([
      "/api/documents/d1/pages/1/image",
      "/api/documents/d1/pages/2/image",
    ]);
  });

  it("accepts via keyboard and advances", async () => {
    const posts = mockFetch();
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    (root.querySelector("#reviewer") as HTMLInputElement).value = "rev1";
    root.querySelector("#reviewer")!.dispatchEvent(new Event("input", { bubbles: true }));

    app.handleKey(new KeyboardEvent("keydown", { key: "a" }));
    await Promise.resolve();
    expect(posts).toHaveLength(1);
    expect(posts[0].url).toContain("/api/review/q1_c1");
    expect(posts[0].body).toMatchObject({ decision: "accept", reviewer: "rev1" });
    expect(root.querySelector("#counter")?.textContent).toBe("2 / 3");
  });

  it("rejects via button click", async () => {
    const posts = mockFetch();
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    (root.querySelector("#reject") as HTMLButtonElement).click();
    await Promise.resolve();
    expect(posts).toHaveLength(1);
    expect(posts[0].body.decision).toBe("reject");
  });

  it("shows the completion screen after the last decision", async () => {
    mockFetch();
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    await app.queue.decide("accept");
    await app.queue.decide("accept");
    await app.queue.decide("reject");
    expect(root.querySelector("#completion")).toBeTruthy();
    expect(root.textContent).toContain("Queue complete");
  });

  it("keeps the decision and shows a retry banner when the POST fails", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: string | URL, init?: RequestInit) => {
        if (String(url).endsWith("/api/review/queue")) {
          return new Response(JSON.stringify(QUEUE), { status: 200 });
        }
        return new Response(null, { status: 500 });
      })
    );
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    await app.queue.decide("reject");
    expect(app.queue.unsent).toHaveLength(1);
    expect(root.querySelector("#retry")).toBeTruthy();
    expect(root.querySelector("#counter")?.textContent).toBe("1 / 3");
  });

  it("ignores shortcuts while typing a note", async () => {
    const posts = mockFetch();
    const app = createApp(root, new ReviewApi());
    await app.queue.load();
    const note = root.querySelector("#note") as HTMLTextAreaElement;
    const event = new KeyboardEvent("keydown", { key: "a" });
    Object.defineProperty(event, "target", { value: note });
    app.handleKey(event);
    await Promise.resolve();
    expect(posts).toHaveLength(0);
  });
});
