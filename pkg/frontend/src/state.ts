/**
 * Studio state and its pure reducer.
 *
 * Every UI interaction becomes a StudioEvent; `reduce(state, event)`
 * returns the next state without mutating the old one, so any session can
 * be replayed from its event list in tests.
 */

export type Rgb = [number, number, number];

export interface HintCell {
  x: number; // top-left, multiple of patchSize
  y: number;
  rgb: Rgb;
}

export interface FrameEntry {
  name: string;
  pngB64: string;
  width: number;
  height: number;
}

export interface StudioState {
  sessionId: string | null;
  frames: FrameEntry[];
  currentFrame: number;
  /** frame index -> placed hints, at most one per grid cell */
  hintsByFrame: Record<number, HintCell[]>;
  /** frame index -> last colorized result (png base64) */
  results: Record<number, string>;
  palette: Rgb[];
  selectedColor: Rgb;
  patchSize: number;
  inFlight: boolean;
  sessionLost: boolean;
  toast: string | null;
  /** snapshots of hintsByFrame for undo, most recent last */
  undoStack: Record<number, HintCell[]>[];
}

export const UNDO_LIMIT = 20;
export const PALETTE_LIMIT = 12;

export type StudioEvent =
  | { type: "frames-loaded"; frames: FrameEntry[] }
  | { type: "session-created"; id: string }
  | { type: "session-lost" }
  | { type: "color-selected"; rgb: Rgb }
  | { type: "hint-placed"; px: number; py: number }
  | { type: "hint-removed"; x: number; y: number }
  | { type: "undo" }
  | { type: "colorize-requested" }
  | { type: "colorize-succeeded"; frameIndex: number; pngB64: string }
  | { type: "colorize-failed"; message: string; sessionLost: boolean }
  | { type: "reset-succeeded" }
  | { type: "frame-selected"; index: number }
  | { type: "toast-cleared" };

export function initialState(patchSize = 4): StudioState {
  return {
    sessionId: null,
    frames: [],
    currentFrame: 0,
    hintsByFrame: {},
    results: {},
    palette: [],
    selectedColor: [220, 40, 40],
    patchSize,
    inFlight: false,
    sessionLost: false,
    toast: null,
    undoStack: [],
  };
}

export function snapToGrid(px: number, py: number, patchSize: number): { x: number; y: number } {
  return {
    x: Math.floor(px / patchSize) * patchSize,
    y: Math.floor(py / patchSize) * patchSize,
  };
}

function currentFrameSize(state: StudioState): { width: number; height: number } | null {
  const frame = state.frames[state.currentFrame];
  return frame ? { width: frame.width, height: frame.height } : null;
}

function pushUndo(state: StudioState): Record<number, HintCell[]>[] {
  const next = [...state.undoStack, state.hintsByFrame];
  return next.length > UNDO_LIMIT ? next.slice(next.length - UNDO_LIMIT) : next;
}

function rememberColor(palette: Rgb[], rgb: Rgb): Rgb[] {
  const key = rgb.join(",");
  const kept = palette.filter((c) => c.join(",") !== key);
  const next = [rgb, ...kept];
  return next.length > PALETTE_LIMIT ? next.slice(0, PALETTE_LIMIT) : next;
}

export function reduce(state: StudioState, event: StudioEvent): StudioState {
  switch (event.type) {
    case "frames-loaded":
      return {
        ...initialState(state.patchSize),
        sessionId: state.sessionId,
        selectedColor: state.selectedColor,
        palette: state.palette,
        frames: event.frames,
      };

    case "session-created":
      return { ...state, sessionId: event.id, sessionLost: false };

    case "session-lost":
      return { ...state, sessionLost: true };

    case "color-selected":
      return { ...state, selectedColor: event.rgb };

    case "hint-placed": {
      const size = currentFrameSize(state);
      if (!size) return state;
      // clicks outside the canvas are ignored
      if (event.px < 0 || event.py < 0 || event.px >= size.width || event.py >= size.height) {
        return state;
      }
      const { x, y } = snapToGrid(event.px, event.py, state.patchSize);
      const existing = state.hintsByFrame[state.currentFrame] ?? [];
      const already = existing.find((h) => h.x === x && h.y === y);
      if (already && already.rgb.join(",") === state.selectedColor.join(",")) {
        return state; // drag over an identical cell: nothing to do
      }
      // later placement replaces the cell occupant
      const hints = [
        ...existing.filter((h) => !(h.x === x && h.y === y)),
        { x, y, rgb: state.selectedColor },
      ];
      return {
        ...state,
        undoStack: pushUndo(state),
        hintsByFrame: { ...state.hintsByFrame, [state.currentFrame]: hints },
        palette: rememberColor(state.palette, state.selectedColor),
      };
    }

    case "hint-removed": {
      const existing = state.hintsByFrame[state.currentFrame] ?? [];
      const hints = existing.filter((h) => !(h.x === event.x && h.y === event.y));
      if (hints.length === existing.length) return state;
      return {
        ...state,
        undoStack: pushUndo(state),
        hintsByFrame: { ...state.hintsByFrame, [state.currentFrame]: hints },
      };
    }

    case "undo": {
      const prev = state.undoStack[state.undoStack.length - 1];
      if (!prev) return state;
      return {
        ...state,
        hintsByFrame: prev,
        undoStack: state.undoStack.slice(0, -1),
      };
    }

    case "colorize-requested":
      // single in-flight request: submitting while one is pending is a no-op
      if (state.inFlight) return state;
      return { ...state, inFlight: true, toast: null };

    case "colorize-succeeded":
      return {
        ...state,
        inFlight: false,
        results: { ...state.results, [event.frameIndex]: event.pngB64 },
      };

    case "colorize-failed":
      return {
        ...state,
        inFlight: false,
        toast: event.message,
        sessionLost: event.sessionLost || state.sessionLost,
      };

    case "reset-succeeded":
      // back to frame 0; placed hints persist across resets
      return { ...state, currentFrame: 0 };

    case "frame-selected": {
      if (event.index < 0 || event.index >= state.frames.length) return state;
      return { ...state, currentFrame: event.index };
    }

    case "toast-cleared":
      return { ...state, toast: null };
  }
}

export function currentHints(state: StudioState): HintCell[] {
  return state.hintsByFrame[state.currentFrame] ?? [];
}
