import { CATEGORY_COLORS, OverlapCategory, projectPolar } from './elementMap.js';
import type { ElementRow } from './types.js';

/** Scatter the 990 elements on the polar disk, colored by overlap category. */
export function drawElementMap(canvas: HTMLCanvasElement, rows: ElementRow[],
                               categories: OverlapCategory[] | null): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const cx = w / 2;
  const cy = h / 2;
  const radius = Math.min(w, h) / 2 - 8;

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = '#546e7a';
  ctx.beginPath();
  ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
  ctx.stroke();

  rows.forEach((row, i) => {
    const p = projectPolar(row.offset);
    const color = categories
      ? CATEGORY_COLORS[categories[i]]
      : row.active
        ? CATEGORY_COLORS.both_active
        : CATEGORY_COLORS.rct_only;
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(cx + p.x * radius, cy - p.y * radius, 3, 0, 2 * Math.PI);
    ctx.fill();
  });
}

export function drawCrosshair(ctx: CanvasRenderingContext2D, x: number, y: number): void {
  ctx.strokeStyle = '#e53935';
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(x - 6, y);
  ctx.lineTo(x + 6, y);
  ctx.moveTo(x, y - 6);
  ctx.lineTo(x, y + 6);
  ctx.stroke();
}

/** Draw a slice PNG scaled into the canvas, with the crosshair overlaid. */
export async function drawSlice(canvas: HTMLCanvasElement, url: string,
                                planeDims: [number, number],
                                crosshair: { px: number; py: number } | null): Promise<void> {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const img = new Image();
  await new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error(`failed to load slice ${url}`));
    img.src = url;
  });
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
  if (crosshair) {
    const sx = canvas.width / planeDims[0];
    const sy = canvas.height / planeDims[1];
    drawCrosshair(ctx, (crosshair.px + 0.5) * sx, (crosshair.py + 0.5) * sy);
  }
}
