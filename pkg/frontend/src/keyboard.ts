// Keyboard shortcuts for the review flow.
//
// - A / Y: accept current question
// - R / X: reject current question
// - ArrowRight / N: next item (skip without deciding)
// - ArrowLeft / P: previous item
// - F: toggle full-resolution page view

export type ReviewAction =
  | "accept"
  | "reject"
  | "next"
  | "previous"
  | "toggle-zoom"
  | null;

export function keyToAction(e: KeyboardEvent): ReviewAction {
  // Don't capture while typing in the reviewer or note fields.
  const target = e.target as HTMLElement | null;
  if (
    target &&
    (target.tagName === "INPUT" || target.tagName === "TEXTAREA" || target.isContentEditable)
  ) {
    return null;
  }
  if (e.ctrlKey || e.metaKey || e.altKey) return null;

  switch (e.key.toLowerCase()) {
    case "a":
    case "y":
      return "accept";
    case "r":
    case "x":
      return "reject";
    case "arrowright":
    case "n":
      return "next";
    case "arrowleft":
    case "p":
      return "previous";
    case "f":
      return "toggle-zoom";
    default:
      return null;
  }
}
