/** Typed client for the colorization service HTTP API. */

import type { HintCell } from "./state";

export interface ColorizeResult {
  framePngB64: string;
  frameIndex: number;
}

export interface ServiceClient {
  health(): Promise<{ model: string; checkpoint: string }>;
  createSession(mode: string, width: number, height: number): Promise<string>;
  colorize(sessionId: string, lineArtPngB64: string, hints: HintCell[]): Promise<ColorizeResult>;
  reset(sessionId: string): Promise<void>;
}

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectOk(response: Response): Promise<any> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ServiceError(response.status, detail);
  }
  return response.json();
}

export function httpClient(baseUrl = ""): ServiceClient {
  const url = (path: string) => `${baseUrl}${path}`;
  return {
    async health() {
      return expectOk(await fetch(url("/api/health")));
    },

    async createSession(mode, width, height) {
      const body = await expectOk(
        await fetch(url("/api/sessions"), {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ mode, width, height }),
        }),
      );
      return body.id as string;
    },

    async colorize(sessionId, lineArtPngB64, hints) {
      const body = await expectOk(
        await fetch(url(`/api/sessions/${sessionId}/colorize`), {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({
            line_art_png_b64: lineArtPngB64,
            hints: hints.map((h) => ({ x: h.x, y: h.y, rgb: h.rgb })),
          }),
        }),
      );
      return { framePngB64: body.frame_png_b64, frameIndex: body.frame_index };
    },

    async reset(sessionId) {
      await expectOk(
        await fetch(url(`/api/sessions/${sessionId}/reset`), { method: "POST" }),
      );
    },
  };
}
