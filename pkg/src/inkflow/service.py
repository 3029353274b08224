"""HTTP inference service: session-based sequential colorization.

Each session carries the previously generated frame so successive
colorize calls stay temporally consistent; reset returns the session to
the blank state. Model weights load once and are never mutated.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .core import InputMode, blank_image, from_model_range, to_model_range
from .model import Generator, generator_forward, load_checkpoint

DEFAULT_TTL_SECONDS = 30 * 60
DEFAULT_PATCH_SIZE = 4


class HintPlacement(BaseModel):
    x: int
    y: int
    rgb: tuple[int, int, int]


class CreateSessionRequest(BaseModel):
    mode: str = "line_art"
    width: int = 256
    height: int = 256


class ColorizeRequest(BaseModel):
    line_art_png_b64: str
    hints: list[HintPlacement] = Field(default_factory=list)


@dataclass
class Session:
    id: str
    mode: InputMode
    width: int
    height: int
    prev_frame: np.ndarray
    frame_index: int = 0
    last_used: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, mode: InputMode, width: int, height: int) -> Session:
        session = Session(
            id=uuid.uuid4().hex,
            mode=mode,
            width=width,
            height=height,
            prev_frame=blank_image(height, width),
        )
        with self._lock:
            self._evict_expired()
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._evict_expired()
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        session.last_used = time.monotonic()
        return session

    def _evict_expired(self) -> None:
        now = time.monotonic()
        stale = [sid for sid, s in self._sessions.items() if now - s.last_used > self.ttl]
        for sid in stale:
            del self._sessions[sid]


def _decode_line_art(b64: str, width: int, height: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            grey = im.convert("L")
            arr = np.asarray(grey, dtype=np.uint8)[:, :, None]
    except HTTPException:
        raise
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"invalid PNG payload: {exc}")
    if arr.shape[0] != height or arr.shape[1] != width:
        raise HTTPException(
            status_code=400,
            detail=f"line art is {arr.shape[1]}x{arr.shape[0]}, session expects {width}x{height}")
    return to_model_range(arr)


def rasterize_hints(hints: list[HintPlacement], width: int, height: int,
                    patch_size: int) -> np.ndarray:
    """Hint placements to a model-range hint map; black means no hint."""
    hint_map = np.full((height, width, 3), -1.0, dtype=np.float32)
    for i, h in enumerate(hints):
        if h.x % patch_size != 0 or h.y % patch_size != 0:
            raise HTTPException(
                status_code=400,
                detail=f"hint {i} at ({h.x}, {h.y}) is not aligned to the {patch_size}px grid")
        if not (0 <= h.x <= width - patch_size and 0 <= h.y <= height - patch_size):
            raise HTTPException(
                status_code=400, detail=f"hint {i} at ({h.x}, {h.y}) lies outside the frame")
        if not all(0 <= v <= 255 for v in h.rgb):
            raise HTTPException(status_code=400, detail=f"hint {i} color {h.rgb} outside 0..255")
        color = np.array(h.rgb, dtype=np.float32) / 127.5 - 1.0
        hint_map[h.y : h.y + patch_size, h.x : h.x + patch_size, :] = color
    return hint_map


def _encode_png(img: np.ndarray) -> str:
    raw = from_model_range(img)
    buf = io.BytesIO()
    Image.fromarray(raw, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(
    generator: Generator,
    checkpoint_name: str = "unnamed",
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    patch_size: int = DEFAULT_PATCH_SIZE,
    static_dir=None,
) -> FastAPI:
    generator.eval()
    app = FastAPI(title="inkflow colorization service")
    store = SessionStore(ttl_seconds=ttl_seconds)
    app.state.sessions = store

    @app.get("/api/health")
    def health():
        return {"model": "loaded", "checkpoint": checkpoint_name}

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            mode = InputMode(req.mode)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown mode {req.mode!r}")
        if req.width < 16 or req.height < 16 or req.width % 4 != 0 or req.height % 4 != 0:
            raise HTTPException(
                status_code=400,
                detail=f"resolution {req.width}x{req.height} must be >= 16 and divisible by 4")
        session = store.create(mode, req.width, req.height)
        return {"id": session.id}

    @app.post("/api/sessions/{session_id}/colorize")
    def colorize(session_id: str, req: ColorizeRequest):
        session = store.get(session_id)
        with session.lock:
            line = _decode_line_art(req.line_art_png_b64, session.width, session.height)
            hint_map = rasterize_hints(req.hints, session.width, session.height, patch_size)
            frame = generator_forward(generator, line, hint_map, session.prev_frame)
            index = session.frame_index
            session.prev_frame = frame
            session.frame_index = index + 1
            return {"frame_png_b64": _encode_png(frame), "frame_index": index}

    @app.post("/api/sessions/{session_id}/reset")
    def reset(session_id: str):
        session = store.get(session_id)
        with session.lock:
            session.prev_frame = blank_image(session.height, session.width)
            session.frame_index = 0
        return {}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="studio")

    return app


def app_from_checkpoint(checkpoint_path, ttl_seconds: float = DEFAULT_TTL_SECONDS,
                        patch_size: int = DEFAULT_PATCH_SIZE, static_dir=None) -> FastAPI:
    generator, _, metadata = load_checkpoint(checkpoint_path)
    patch = int(metadata.get("patch_size", patch_size))
    return create_app(generator, checkpoint_name=str(checkpoint_path),
                      ttl_seconds=ttl_seconds, patch_size=patch, static_dir=static_dir)
