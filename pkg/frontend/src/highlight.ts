// Entity highlighting: split a question text into plain/highlighted segments
// by matching the substitute surfaces (client-side string matching).

export interface Segment {
  text: string;
  highlighted: boolean;
}

export function highlightSurfaces(text: string, surfaces: string[]): Segment[] {
  // Longer surfaces first so overlapping candidates prefer the longest match.
  const ordered = [...surfaces].filter((s) => s.length > 0).sort((a, b) => b.length - a.length);
  const segments: Segment[] = [];
  let pos = 0;
  while (pos < text.length) {
    let matchAt = -1;
    let matchSurface = "";
    for (const surface of ordered) {
      const idx = text.indexOf(surface, pos);
      if (idx !== -1 && (matchAt === -1 || idx < matchAt)) {
        matchAt = idx;
        matchSurface = surface;
      }
    }
    if (matchAt === -1) {
      segments.push({ text: text.slice(pos), highlighted: false });
      break;
    }
    if (matchAt > pos) segments.push({ text: text.slice(pos, matchAt), highlighted: false });
    segments.push({ text: matchSurface, highlighted: true });
    pos = matchAt + matchSurface.length;
  }
  if (text.length === 0) return [];
  return segments;
}

export function coversEverySurface(text: string, surfaces: string[]): boolean {
  return surfaces.every((s) => text.includes(s));
}
