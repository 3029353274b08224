/** DOM wiring for the hint studio. */

import { httpClient } from "./api";
import {
  canvasToFrame,
  drawFrame,
  drawResult,
  hexToRgb,
  pngB64ToImage,
  rgbToCss,
  rgbToHex,
  sampleColor,
} from "./canvas";
import { StudioController } from "./controller";
import { currentHints, FrameEntry, snapToGrid } from "./state";

const SCALE = 3;
const params = new URLSearchParams(window.location.search);
const controller = new StudioController(httpClient(params.get("service") ?? ""));

const el = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
const lineCanvas = el<HTMLCanvasElement>("line-canvas");
const resultCanvas = el<HTMLCanvasElement>("result-canvas");
const prevResultCanvas = el<HTMLCanvasElement>("prev-result-canvas");
const frameLabel = el<HTMLSpanElement>("frame-label");
const toastBox = el<HTMLDivElement>("toast");
const recreateBox = el<HTMLDivElement>("recreate");
const colorizeBtn = el<HTMLButtonElement>("colorize");
const resetBtn = el<HTMLButtonElement>("reset");
const paletteBox = el<HTMLDivElement>("palette");
const colorInput = el<HTMLInputElement>("color");
const referenceCanvas = el<HTMLCanvasElement>("reference-canvas");

const lineCtx = lineCanvas.getContext("2d")!;
const resultCtx = resultCanvas.getContext("2d")!;
const prevResultCtx = prevResultCanvas.getContext("2d")!;
const referenceCtx = referenceCanvas.getContext("2d", { willReadFrequently: true })!;

const imageCache = new Map<string, HTMLImageElement>();
async function cachedImage(pngB64: string): Promise<HTMLImageElement> {
  let img = imageCache.get(pngB64);
  if (!img) {
    img = await pngB64ToImage(pngB64);
    imageCache.set(pngB64, img);
  }
  return img;
}

async function render() {
  const s = controller.state;
  const frame = s.frames[s.currentFrame];
  frameLabel.textContent = frame
    ? `frame ${s.currentFrame + 1} / ${s.frames.length} (${frame.name})`
    : "no frames loaded";
  colorizeBtn.disabled = s.inFlight || !frame;
  resetBtn.disabled = !s.sessionId;
  toastBox.textContent = s.toast ?? "";
  toastBox.style.display = s.toast ? "block" : "none";
  recreateBox.style.display = s.sessionLost ? "block" : "none";
  colorInput.value = rgbToHex(s.selectedColor);

  paletteBox.replaceChildren(
    ...s.palette.map((rgb) => {
      const chip = document.createElement("button");
      chip.className = "chip";
      chip.style.background = rgbToCss(rgb);
      chip.title = rgbToHex(rgb);
      chip.addEventListener("click", () =>
        controller.dispatch({ type: "color-selected", rgb }));
      return chip;
    }),
  );

  drawFrame(lineCtx, frame ? await cachedImage(frame.pngB64) : null,
            currentHints(s), s.patchSize, SCALE);
  const result = s.results[s.currentFrame];
  drawResult(resultCtx, result ? await cachedImage(result) : null, SCALE);
  const prev = s.results[s.currentFrame - 1];
  drawResult(prevResultCtx, prev ? await cachedImage(prev) : null, SCALE);
}

controller.onChange(() => void render());

// frame loading
el<HTMLInputElement>("frames").addEventListener("change", async (e) => {
  const files = [...((e.target as HTMLInputElement).files ?? [])].sort((a, b) =>
    a.name.localeCompare(b.name));
  const frames: FrameEntry[] = [];
  for (const file of files) {
    const buf = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    buf.forEach((b) => (binary += String.fromCharCode(b)));
    const pngB64 = btoa(binary);
    const img = await pngB64ToImage(pngB64);
    frames.push({ name: file.name, pngB64, width: img.naturalWidth, height: img.naturalHeight });
  }
  controller.dispatch({ type: "frames-loaded", frames });
});

// hint placement: click or drag paints cells with the selected color
let painting = false;
lineCanvas.addEventListener("mousedown", (e) => {
  painting = true;
  const { px, py } = canvasToFrame(e.offsetX, e.offsetY, SCALE);
  controller.dispatch({ type: "hint-placed", px, py });
});
lineCanvas.addEventListener("mousemove", (e) => {
  if (!painting) return;
  const { px, py } = canvasToFrame(e.offsetX, e.offsetY, SCALE);
  controller.dispatch({ type: "hint-placed", px, py });
});
window.addEventListener("mouseup", () => (painting = false));
lineCanvas.addEventListener("contextmenu", (e) => {
  e.preventDefault();
  const { px, py } = canvasToFrame(e.offsetX, e.offsetY, SCALE);
  const cell = snapToGrid(px, py, controller.state.patchSize);
  controller.dispatch({ type: "hint-removed", ...cell });
});

// color selection, palette, eyedropper
colorInput.addEventListener("input", () =>
  controller.dispatch({ type: "color-selected", rgb: hexToRgb(colorInput.value) }));

el<HTMLInputElement>("reference").addEventListener("change", async (e) => {
  const file = (e.target as HTMLInputElement).files?.[0];
  if (!file) return;
  const img = new Image();
  img.src = URL.createObjectURL(file);
  await img.decode();
  referenceCanvas.width = img.naturalWidth;
  referenceCanvas.height = img.naturalHeight;
  referenceCtx.drawImage(img, 0, 0);
  referenceCanvas.style.display = "block";
});
referenceCanvas.addEventListener("click", (e) => {
  const rgb = sampleColor(referenceCtx, e.offsetX, e.offsetY);
  controller.dispatch({ type: "color-selected", rgb });
});

// actions
colorizeBtn.addEventListener("click", () => void controller.requestColorize());
resetBtn.addEventListener("click", () => void controller.resetSequence());
el<HTMLButtonElement>("undo").addEventListener("click", () =>
  controller.dispatch({ type: "undo" }));
el<HTMLButtonElement>("prev-frame").addEventListener("click", () => controller.prevFrame());
el<HTMLButtonElement>("next-frame").addEventListener("click", () => controller.nextFrame());
el<HTMLButtonElement>("recreate-session").addEventListener("click", () =>
  void controller.recreateSession());

void render();
