/**
 * Orchestrates the studio: owns the state, talks to the service, and
 * notifies the view after every transition. All state changes still go
 * through the pure reducer.
 */

import { ServiceClient, ServiceError } from "./api";
import {
  currentHints,
  initialState,
  reduce,
  StudioEvent,
  StudioState,
} from "./state";

export class StudioController {
  state: StudioState;
  private listeners: Array<(s: StudioState) => void> = [];

  constructor(private client: ServiceClient, patchSize = 4) {
    this.state = initialState(patchSize);
  }

  onChange(listener: (s: StudioState) => void): void {
    this.listeners.push(listener);
  }

  dispatch(event: StudioEvent): void {
    this.state = reduce(this.state, event);
    for (const l of this.listeners) l(this.state);
  }

  async ensureSession(): Promise<string> {
    const frame = this.state.frames[this.state.currentFrame];
    if (!frame) throw new Error("no frames loaded");
    if (this.state.sessionId && !this.state.sessionLost) return this.state.sessionId;
    const id = await this.client.createSession("line_art", frame.width, frame.height);
    this.dispatch({ type: "session-created", id });
    return id;
  }

  /** Recreate the server session after a 404; placed hints are untouched. */
  async recreateSession(): Promise<void> {
    this.dispatch({ type: "session-lost" });
    await this.ensureSession();
  }

  async requestColorize(): Promise<void> {
    if (this.state.inFlight) return; // single in-flight request
    const frame = this.state.frames[this.state.currentFrame];
    if (!frame) return;
    this.dispatch({ type: "colorize-requested" });
    try {
      const sessionId = await this.ensureSession();
      const result = await this.client.colorize(sessionId, frame.pngB64, currentHints(this.state));
      this.dispatch({
        type: "colorize-succeeded",
        frameIndex: this.state.currentFrame,
        pngB64: result.framePngB64,
      });
    } catch (err) {
      const lost = err instanceof ServiceError && err.status === 404;
      this.dispatch({
        type: "colorize-failed",
        message: err instanceof Error ? err.message : String(err),
        sessionLost: lost,
      });
    }
  }

  /** Blank the temporal carry (new scene); view returns to frame 0, hints stay. */
  async resetSequence(): Promise<void> {
    if (!this.state.sessionId) return;
    try {
      await this.client.reset(this.state.sessionId);
      this.dispatch({ type: "reset-succeeded" });
    } catch (err) {
      const lost = err instanceof ServiceError && err.status === 404;
      this.dispatch({
        type: "colorize-failed",
        message: err instanceof Error ? err.message : String(err),
        sessionLost: lost,
      });
    }
  }

  /** Advance within the scene: the session (temporal carry) rides along. */
  nextFrame(): void {
    this.dispatch({ type: "frame-selected", index: this.state.currentFrame + 1 });
  }

  prevFrame(): void {
    this.dispatch({ type: "frame-selected", index: this.state.currentFrame - 1 });
  }
}
