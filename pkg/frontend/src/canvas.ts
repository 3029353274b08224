/** Canvas rendering: line art underlay, hint cells, result panel. */

import type { HintCell, Rgb } from "./state";

export function rgbToCss([r, g, b]: Rgb): string {
  return `rgb(${r}, ${g}, ${b})`;
}

export function rgbToHex([r, g, b]: Rgb): string {
  const h = (v: number) => v.toString(16).padStart(2, "0");
  return `#${h(r)}${h(g)}${h(b)}`;
}

export function hexToRgb(hex: string): Rgb {
  const v = hex.replace("#", "");
  return [
    parseInt(v.slice(0, 2), 16),
    parseInt(v.slice(2, 4), 16),
    parseInt(v.slice(4, 6), 16),
  ];
}

export async function pngB64ToImage(pngB64: string): Promise<HTMLImageElement> {
  const img = new Image();
  img.src = `data:image/png;base64,${pngB64}`;
  await img.decode();
  return img;
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  image: HTMLImageElement | null,
  hints: HintCell[],
  patchSize: number,
  scale: number,
): void {
  ctx.canvas.width = (image?.naturalWidth ?? 256) * scale;
  ctx.canvas.height = (image?.naturalHeight ?? 256) * scale;
  ctx.imageSmoothingEnabled = false;
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (image) {
    ctx.drawImage(image, 0, 0, ctx.canvas.width, ctx.canvas.height);
  }
  for (const hint of hints) {
    ctx.fillStyle = rgbToCss(hint.rgb);
    ctx.fillRect(hint.x * scale, hint.y * scale, patchSize * scale, patchSize * scale);
    ctx.strokeStyle = "rgba(0, 0, 0, 0.5)";
    ctx.strokeRect(hint.x * scale + 0.5, hint.y * scale + 0.5,
                   patchSize * scale - 1, patchSize * scale - 1);
  }
}

export function drawResult(ctx: CanvasRenderingContext2D, image: HTMLImageElement | null,
                           scale: number): void {
  ctx.canvas.width = (image?.naturalWidth ?? 256) * scale;
  ctx.canvas.height = (image?.naturalHeight ?? 256) * scale;
  ctx.imageSmoothingEnabled = false;
  if (!image) {
    ctx.fillStyle = "#222222";
    ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
    return;
  }
  ctx.drawImage(image, 0, 0, ctx.canvas.width, ctx.canvas.height);
}

/** Canvas pixel position -> frame pixel position (before grid snapping). */
export function canvasToFrame(offsetX: number, offsetY: number, scale: number) {
  return { px: Math.floor(offsetX / scale), py: Math.floor(offsetY / scale) };
}

/** Sample a color from a reference image drawn on a hidden canvas. */
export function sampleColor(ctx: CanvasRenderingContext2D, x: number, y: number): Rgb {
  const d = ctx.getImageData(x, y, 1, 1).data;
  return [d[0] ?? 0, d[1] ?? 0, d[2] ?? 0];
}
