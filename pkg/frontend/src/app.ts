// DOM wiring for the review screen: one item at a time, entity diff,
// expandable page thumbnails, counter, error banner, completion screen.

import { ReviewApi, ReviewItem } from "./api.js";
import { highlightSurfaces } from "./highlight.js";
import { keyToAction } from "./keyboard.js";
import { ReviewQueue } from "./queue.js";

export interface App {
  queue: ReviewQueue;
  root: HTMLElement;
  handleKey(e: KeyboardEvent): void;
}

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function renderQuestion(container: HTMLElement, item: ReviewItem): void {
  const surfaces = item.replacements.map((r) => r.substitute);
  const original = el("p", "question original");
  original.append(el("span", "label", "original: "), el("span", "", item.original_text));
  const refined = el("p", "question refined");
  refined.append(el("span", "label", "corrupted: "));
  for (const segment of highlightSurfaces(item.refined_text, surfaces)) {
    const span = el("span", segment.highlighted ? "entity" : "", segment.text);
    refined.append(span);
  }
  container.append(original, refined);

  const list = el("ul", "replacements");
  for (const r of item.replacements) {
    list.append(
      el(
        "li",
        "",
        `${r.original} -> ${r.substitute} (${r.fine_type}, ${r.element_class}, ` +
          `page ${r.page}, ${r.quadrant})`
      )
    );
  }
  container.append(list);
}

function renderPages(container: HTMLElement, item: ReviewItem, api: ReviewApi, zoomed: boolean): void {
  const strip = el("div", zoomed ? "pages zoomed" : "pages");
  for (const path of item.pages) {
    const img = el("img", "page-image") as HTMLImageElement;
    img.src = api.imageUrl(path);
    img.loading = "lazy";
    img.addEventListener("click", () => strip.classList.toggle("zoomed"));
    strip.append(img);
  }
  container.append(strip);
}

export function createApp(root: HTMLElement, api: ReviewApi): App {
  const queue = new ReviewQueue(api);
  let zoomed = false;

  function render(): void {
    root.textContent = "";
    const header = el("header");
    const { index, total } = queue.position();
    header.append(el("h1", "", "Unanswerability review"));
    const counter = el("span", "counter");
    counter.id = "counter";
    counter.textContent = total > 0 && index <= total ? `${index} / ${total}` : "-";
    header.append(counter);
    header.append(
      el("span", "pending", `${Math.max(queue.remaining, 0)} pending · ${queue.totalDecided} decided`)
    );
    root.append(header);

    if (queue.lastError) {
      const banner = el("div", "banner error");
      banner.append(el("span", "", queue.lastError));
      const retry = el("button", "", "retry") as HTMLButtonElement;
      retry.id = "retry";
      retry.addEventListener("click", () => {
        if (queue.unsent.length) void queue.retryUnsent();
        else void queue.load();
      });
      banner.append(retry);
      root.append(banner);
    }

    const reviewerRow = el("div", "reviewer-row");
    reviewerRow.append(el("label", "", "reviewer: "));
    const reviewer = el("input") as HTMLInputElement;
    reviewer.id = "reviewer";
    reviewer.value = queue.reviewer;
    reviewer.addEventListener("input", () => {
      queue.reviewer = reviewer.value;
    });
    reviewerRow.append(reviewer);
    root.append(reviewerRow);

    const item = queue.current();
    if (!item) {
      const doneBox = el("div", "completion");
      doneBox.id = "completion";
      doneBox.append(el("h2", "", "Queue complete"));
      doneBox.append(
        el("p", "", `${queue.decidedHere} decision(s) recorded this session. Reload to re-check.`)
      );
      root.append(doneBox);
      return;
    }

    const main = el("main");
    main.append(el("p", "meta", `${item.question_id} · complexity ${item.complexity}`));
    renderQuestion(main, item);
    renderPages(main, item, api, zoomed);

    const noteRow = el("div", "note-row");
    noteRow.append(el("label", "", "note: "));
    const note = el("textarea") as HTMLTextAreaElement;
    note.id = "note";
    noteRow.append(note);
    main.append(noteRow);

    const controls = el("div", "controls");
    const accept = el("button", "accept", "accept (a)") as HTMLButtonElement;
    accept.id = "accept";
    accept.addEventListener("click", () => void queue.decide("accept", note.value));
    const reject = el("button", "reject", "reject (r)") as HTMLButtonElement;
    reject.id = "reject";
    reject.addEventListener("click", () => void queue.decide("reject", note.value));
    const skip = el("button", "", "next (n)") as HTMLButtonElement;
    skip.addEventListener("click", () => queue.next());
    const back = el("button", "", "previous (p)") as HTMLButtonElement;
    back.addEventListener("click", () => queue.previous());
    controls.append(accept, reject, skip, back);
    main.append(controls);
    root.append(main);
  }

  function handleKey(e: KeyboardEvent): void {
    const action = keyToAction(e);
    if (!action) return;
    e.preventDefault();
    const note = (root.querySelector("#note") as HTMLTextAreaElement | null)?.value ?? "";
    if (action === "accept") void queue.decide("accept", note);
    else if (action === "reject") void queue.decide("reject", note);
    else if (action === "next") queue.next();
    else if (action === "previous") queue.previous();
    else if (action === "toggle-zoom") {
      zoomed = !zoomed;
      render();
    }
  }

  queue.onChange(render);
  render();
  return { queue, root, handleKey };
}
