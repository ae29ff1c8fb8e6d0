"""Operator-facing HTTP service over a pass: state, telemetry, stream, uplink.

The API is strictly the ground station's view. Commands POSTed here are not
shortcuts into the satellite: they are scheduled as DTMF audio through the
simulated channel, and their acks come back the long way as AFSK frames.

Two hosting modes share the API surface: a live pass advancing in paced
wall-clock time (commands accepted), and a finished session directory
served read-only (commands rejected).
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response, StreamingResponse

from .dtmf import DtmfError, command_encode
from .groundstation import GroundStation, GsSession
from .kernel import MissionKernel
from .scenario import Scenario
from .sstv import HEIGHT, ImageRaster, ppm_read

STREAM_POLL_S = 0.05


class EventLog:
    """Append-only, seq-numbered event feed shared with SSE consumers."""

    def __init__(self):
        self._events: list[dict] = []
        self._cond = threading.Condition()

    def emit(self, etype: str, data: dict):
        with self._cond:
            event = {"seq": len(self._events), "type": etype, "data": data}
            self._events.append(event)
            self._cond.notify_all()

    def since(self, seq: int) -> list[dict]:
        with self._cond:
            return self._events[seq + 1:]

    def wait_for_more(self, seq: int, timeout: float) -> list[dict]:
        with self._cond:
            self._cond.wait_for(lambda: len(self._events) > seq + 1, timeout=timeout)
            return self._events[seq + 1:]


def _row_b64(row: np.ndarray) -> str:
    return base64.b64encode(row.astype(np.uint8).tobytes()).decode()


class LivePassController:
    """Advances a mission on a background thread at a wall-clock pace.

    pace = logical seconds per wall second. All kernel access is serialized
    through one lock; HTTP handlers only read snapshots or inject commands.
    """

    live = True

    def __init__(self, scenario: Scenario, session_dir=None, pace: float = 1.0):
        self.scenario = scenario
        self.pace = pace
        self.lock = threading.Lock()
        self.kernel = MissionKernel(scenario, session_dir=session_dir)
        self.session = GsSession(session_dir=Path(session_dir) if session_dir else None)
        self.station = GroundStation(scenario, self.session)
        self.events = EventLog()
        self.done = threading.Event()
        self._thread: threading.Thread | None = None
        self._last_mode_seen: str | None = None

    # -- pass thread ------------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        duration_ms = int(self.scenario.duration_s * 1000)
        t0 = time.monotonic()
        self.events.emit("log", {"message": "pass started",
                                 "duration_s": self.scenario.duration_s})
        while not self.done.is_set():
            with self.lock:
                if self.kernel.state.clock_ms >= duration_ms:
                    break
                self.kernel.tick()
                self._poll_ground()
                clock_ms = self.kernel.state.clock_ms
            target = t0 + clock_ms / 1000.0 / self.pace
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        with self.lock:
            self.kernel.finalize()
            for row in self.session.expire_commands(self.kernel.state.clock_ms):
                self.events.emit("ack", self._command_event(row))
            self.session.save()
        self.events.emit("log", {"message": "pass complete"})
        self.done.set()

    def stop(self):
        self.done.set()
        if self._thread:
            self._thread.join(timeout=5)

    def _poll_ground(self):
        station = self.station

        def on_line(line_idx, row):
            self.events.emit("image-progress", {
                "image_id": station._pending_meta,
                "line": line_idx + 1, "total": HEIGHT,
                "row_index": line_idx, "row_rgb_base64": _row_b64(row)})

        def on_frames(rows):
            for row in rows:
                self.events.emit("telemetry", row)
                if row["ftype_name"] == "housekeeping":
                    mode = row["fields"].get("mode_name")
                    if mode and mode != self._last_mode_seen:
                        self._last_mode_seen = mode
                        self.events.emit("mode", {"mode_name": mode,
                                                  "clock_ms": row["fields"]["clock_ms"]})
                if row["ftype_name"] == "ack":
                    matched = self._find_command(row["fields"]["seq"])
                    if matched:
                        self.events.emit("ack", self._command_event(matched))

        def on_image(row):
            self.events.emit("log", {"message": "image decoded", **row})

        before = {c["id"]: c["status"] for c in self.session.commands}
        station.poll(self.kernel, on_line=on_line, on_frames=on_frames,
                     on_image=on_image)
        for row in self.session.expire_commands(self.kernel.state.clock_ms):
            self.events.emit("ack", self._command_event(row))
        for row in self.session.commands:
            if row["id"] not in before:
                self.events.emit("log", {"message": "command sent",
                                         "id": row["id"], "opcode": row["opcode"],
                                         "args": row["args"]})

    def _find_command(self, ack_seq: int):
        for row in self.session.commands:
            if row["ack_seq"] == ack_seq:
                return row
        return None

    @staticmethod
    def _command_event(row: dict) -> dict:
        return {"id": row["id"], "opcode": row["opcode"], "args": row["args"],
                "status": row["status"], "ack_seq": row["ack_seq"]}

    # -- API backing --------------------------------------------------------------

    def state(self) -> dict:
        with self.lock:
            snap = {
                "connection": "complete" if self.done.is_set() else "live",
                "pace": self.pace,
                "clock_ms": self.kernel.state.clock_ms,
                "duration_ms": int(self.scenario.duration_s * 1000),
                "mode_name": None,
                "housekeeping": self.session.last_housekeeping,
                "commands": len(self.session.commands),
                "frames": len(self.session.frames),
                "images": len(self.session.images),
            }
            if self.session.last_housekeeping:
                snap["mode_name"] = self.session.last_housekeeping["mode_name"]
            return snap

    def telemetry_since(self, seq: int) -> list[dict]:
        with self.lock:
            return [f for f in self.session.frames if f["seq"] > seq]

    def command_history(self) -> list[dict]:
        with self.lock:
            return list(self.session.commands)

    def image_rows(self) -> list[dict]:
        with self.lock:
            return list(self.session.images)

    def image_raster(self, image_id: int) -> ImageRaster | None:
        with self.lock:
            return self.session.decoded_rasters.get(image_id)

    def inject(self, opcode: str, args: str) -> int:
        if self.done.is_set():
            raise RuntimeError("pass already complete")
        with self.lock:
            return self.kernel.inject_uplink(opcode, args, source="operator")


class SessionViewer:
    """Read-only controller over a finished session directory."""

    live = False

    def __init__(self, session_dir):
        self.session_dir = Path(session_dir)
        gdir = self.session_dir / "ground"
        if not gdir.is_dir():
            raise FileNotFoundError(f"{gdir} missing: not a completed pass session")
        self.frames = _load_jsonl(gdir / "frames.jsonl")
        self.commands = _load_jsonl(gdir / "commands.jsonl")
        self.images = sorted(
            (json.loads(p.read_text()) for p in (gdir / "images").glob("*.json")),
            key=lambda row: row["image_id"]) if (gdir / "images").is_dir() else []
        self.events = EventLog()
        self._replay()

    def _replay(self):
        feed = []
        last_mode = None
        for row in self.frames:
            feed.append(("telemetry", row, row["t_ms"]))
            if row["ftype_name"] == "housekeeping":
                mode = row["fields"].get("mode_name")
                if mode and mode != last_mode:
                    last_mode = mode
                    feed.append(("mode", {"mode_name": mode,
                                          "clock_ms": row["fields"]["clock_ms"]},
                                 row["t_ms"]))
        for row in self.commands:
            if row["status"] != "pending":
                feed.append(("ack", {"id": row["id"], "opcode": row["opcode"],
                                     "args": row["args"], "status": row["status"],
                                     "ack_seq": row["ack_seq"]},
                             row["acked_t_ms"] or row["t_ms"]))
        for row in self.images:
            raster = self.image_raster(row["image_id"])
            if raster is not None:
                for k in range(HEIGHT):
                    feed.append(("image-progress", {
                        "image_id": row["image_id"], "line": k + 1, "total": HEIGHT,
                        "row_index": k, "row_rgb_base64": _row_b64(raster.pixels[k])},
                        row["t_ms"]))
        feed.sort(key=lambda item: (item[2] if item[2] is not None else 0))
        for etype, data, _ in feed:
            self.events.emit(etype, data)
        self.events.emit("log", {"message": "session replay loaded"})
        self.done = threading.Event()
        self.done.set()

    def state(self) -> dict:
        hk = None
        for row in reversed(self.frames):
            if row["ftype_name"] == "housekeeping":
                hk = row["fields"]
                break
        return {"connection": "session", "clock_ms": self.frames[-1]["t_ms"] if self.frames else 0,
                "mode_name": hk["mode_name"] if hk else None, "housekeeping": hk,
                "commands": len(self.commands), "frames": len(self.frames),
                "images": len(self.images)}

    def telemetry_since(self, seq: int) -> list[dict]:
        return [f for f in self.frames if f["seq"] > seq]

    def command_history(self) -> list[dict]:
        return list(self.commands)

    def image_rows(self) -> list[dict]:
        return list(self.images)

    def image_raster(self, image_id: int) -> ImageRaster | None:
        path = self.session_dir / "ground" / "images" / f"{image_id:03d}.ppm"
        if not path.is_file():
            return None
        return ppm_read(path)

    def inject(self, opcode: str, args: str) -> int:
        raise RuntimeError("no live pass: command injection rejected")

    def stop(self):
        pass


def _load_jsonl(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def create_app(controller) -> FastAPI:
    app = FastAPI(title="cubelink ground station", docs_url=None, redoc_url=None)
    app.state.controller = controller

    @app.get("/api/state")
    def get_state():
        return controller.state()

    @app.get("/api/telemetry")
    def get_telemetry(since: int = -1):
        return controller.telemetry_since(since)

    @app.get("/api/commands")
    def get_commands():
        return controller.command_history()

    @app.get("/api/images")
    def get_images():
        return controller.image_rows()

    @app.get("/api/images/{image_id}")
    def get_image(image_id: int):
        raster = controller.image_raster(image_id)
        if raster is None:
            raise HTTPException(status_code=404, detail=f"no image {image_id}")
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(raster.pixels).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/command", status_code=202)
    def post_command(body: dict):
        opcode = str(body.get("opcode", ""))
        args = str(body.get("args", ""))
        try:
            command_encode(opcode, args)
        except DtmfError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            cid = controller.inject(opcode, args)
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"id": cid}

    @app.get("/api/stream")
    def get_stream(since: int = -1):
        def generate():
            seq = since
            yield ": stream open\n\n"
            while True:
                events = controller.events.since(seq)
                if not events:
                    if controller.done.is_set():
                        events = controller.events.since(seq)
                        if not events:
                            yield "event: end\ndata: {}\n\n"
                            return
                    else:
                        events = controller.events.wait_for_more(seq, STREAM_POLL_S)
                for event in events:
                    seq = event["seq"]
                    payload = json.dumps(event["data"], separators=(",", ":"))
                    yield f"id: {seq}\nevent: {event['type']}\ndata: {payload}\n\n"

        return StreamingResponse(generate(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app


def serve(controller, host: str = "127.0.0.1", port: int = 8151,
          static_dir=None):
    """Run the service; blocks until the process is interrupted."""
    import uvicorn

    app = create_app(controller)
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")
    if getattr(controller, "live", False):
        controller.start()
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    uvicorn.Server(config).run()
