// Pan/zoom transform math for the diagram pane, kept pure so it can be
// unit tested without a DOM.

export interface Transform {
  x: number;
  y: number;
  scale: number;
}

export const IDENTITY: Transform = { x: 0, y: 0, scale: 1 };
export const MIN_SCALE = 0.2;
export const MAX_SCALE = 8;
export const ZOOM_STEP = 1.25;

export function clampScale(scale: number): number {
  return Math.min(MAX_SCALE, Math.max(MIN_SCALE, scale));
}

/** Zoom by `factor` keeping the content point under (px, py) fixed. */
export function zoomAt(t: Transform, px: number, py: number, factor: number): Transform {
  const scale = clampScale(t.scale * factor);
  const applied = scale / t.scale;
  return {
    scale,
    x: px - (px - t.x) * applied,
    y: py - (py - t.y) * applied,
  };
}

export function panBy(t: Transform, dx: number, dy: number): Transform {
  return { ...t, x: t.x + dx, y: t.y + dy };
}

export function toCss(t: Transform): string {
  return `translate(${t.x}px, ${t.y}px) scale(${t.scale})`;
}
