"""Ground segment: classify and decode downlink audio, build uplink audio,
and orchestrate complete simulated passes.

The ground station never touches satellite state directly; everything it
knows arrives as audio through the channel, and everything it sends leaves
as DTMF audio. A pass therefore exercises the exact radio path hardware
would.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .afsk import (
    FT_ACK,
    FT_EVENT_LOG,
    FT_HOUSEKEEPING,
    FT_IMAGE_META,
    FrameDiagnostic,
    TelemetryFrame,
    afsk_demodulate,
    frame_parse,
)
from .audio import RATE, AudioBuffer, awgn_apply, concat, silence
from .dtmf import command_encode, dtmf_encode
from .kernel import MissionKernel
from .obc import AckPayload, HousekeepingPayload, ImageMetaPayload, unpack_event_log
from .scenario import Scenario
from .sstv import DecodeReport, ImageRaster, SstvDecodeError, ppm_write, sstv_decode

FRAME_TYPE_NAMES = {
    FT_HOUSEKEEPING: "housekeeping",
    FT_EVENT_LOG: "event_log",
    FT_ACK: "ack",
    FT_IMAGE_META: "image_meta",
}

COMMAND_TIMEOUT_MS = 10_000
UPLINK_PAD_S = 0.3          # leading/trailing silence, stands in for VOX keying


@dataclass
class GsArtifacts:
    """Everything recovered from one piece of downlink audio."""

    frames: list = field(default_factory=list)          # [TelemetryFrame]
    diagnostics: list = field(default_factory=list)     # [FrameDiagnostic | str]
    image: ImageRaster | None = None
    report: DecodeReport | None = None


def gs_decode(buf: AudioBuffer, on_line=None) -> GsArtifacts:
    """Classify a downlink segment and decode it.

    SSTV is tried first (a VIS header is unambiguous); anything else goes
    through the AFSK demodulator. Garbage input returns an empty result
    with a diagnostic instead of raising.
    """
    art = GsArtifacts()
    try:
        art.image, art.report = sstv_decode(buf, on_line=on_line)
        return art
    except SstvDecodeError:
        pass
    try:
        art.frames, art.diagnostics = frame_parse(afsk_demodulate(buf))
    except Exception as exc:   # decoding garbage must never take the station down
        art.diagnostics.append(FrameDiagnostic("decoder_error", 0, repr(exc)))
        return art
    if not art.frames and not art.diagnostics:
        art.diagnostics.append(FrameDiagnostic("empty", 0, "nothing decodable"))
    return art


def gs_uplink(opcode: str, args: str = "", rate: int = RATE) -> AudioBuffer:
    """Command audio ready for transmission: padded DTMF symbol burst."""
    symbols = command_encode(opcode, args)
    return concat([silence(UPLINK_PAD_S, rate),
                   dtmf_encode(symbols, rate=rate),
                   silence(UPLINK_PAD_S, rate)])


def decode_frame_fields(frame: TelemetryFrame) -> dict:
    """Human-readable view of a telemetry frame's payload."""
    try:
        if frame.ftype == FT_HOUSEKEEPING:
            hk = HousekeepingPayload.unpack(frame.payload)
            return {"clock_ms": hk.clock_ms, "mode": int(hk.mode),
                    "mode_name": hk.mode.name, "stale": hk.stale,
                    "battery_mv": hk.battery_mv, "temp_c_x10": hk.temp_c_x10,
                    "gyro_cds": list(hk.gyro_cds), "mag_tut": list(hk.mag_tut)}
        if frame.ftype == FT_ACK:
            ack = AckPayload.unpack(frame.payload)
            return {"seq": ack.seq, "opcode": ack.opcode, "ok": ack.ok,
                    "reason": ack.reason}
        if frame.ftype == FT_IMAGE_META:
            meta = ImageMetaPayload.unpack(frame.payload)
            return {"image_id": meta.image_id, "width": meta.width,
                    "height": meta.height}
        if frame.ftype == FT_EVENT_LOG:
            return {"entries": [[t, c] for t, c in unpack_event_log(frame.payload)]}
    except (ValueError, KeyError) as exc:
        return {"parse_error": str(exc)}
    return {}


@dataclass
class GsSession:
    """Ground-side record of one pass."""

    session_dir: Path | None = None
    frames: list = field(default_factory=list)       # dict rows, seq increasing
    images: list = field(default_factory=list)       # dict rows per decoded image
    commands: list = field(default_factory=list)     # dict rows per sent command
    diagnostics: list = field(default_factory=list)
    decoded_rasters: dict = field(default_factory=dict)   # image_id -> ImageRaster
    last_housekeeping: dict | None = None
    clock_ms: int = 0

    # -- ingest ---------------------------------------------------------------

    def record_sent(self, command_id: int, t_ms: int, opcode: str, args: str,
                    source: str) -> dict:
        row = {"id": command_id, "t_ms": t_ms, "opcode": opcode, "args": args,
               "source": source, "status": "pending", "ack_seq": None,
               "ack_ok": None, "acked_t_ms": None}
        self.commands.append(row)
        return row

    def expire_commands(self, now_ms: int) -> list[dict]:
        expired = []
        for row in self.commands:
            if row["status"] == "pending" and now_ms - row["t_ms"] > COMMAND_TIMEOUT_MS:
                row["status"] = "failed-timeout"
                expired.append(row)
        return expired

    def ingest_frames(self, frames, diagnostics, t_ms: int):
        rows = []
        for frame in frames:
            seq = len(self.frames)
            fields = decode_frame_fields(frame)
            row = {"seq": seq, "t_ms": t_ms, "ftype": frame.ftype,
                   "ftype_name": FRAME_TYPE_NAMES.get(frame.ftype, "unknown"),
                   "payload_hex": frame.payload.hex(), "fields": fields}
            self.frames.append(row)
            rows.append(row)
            if frame.ftype == FT_HOUSEKEEPING and "clock_ms" in fields:
                self.last_housekeeping = fields
            if frame.ftype == FT_ACK and "seq" in fields:
                self._match_ack(fields, t_ms)
        for diag in diagnostics:
            self.diagnostics.append({"t_ms": t_ms, "kind": getattr(diag, "kind", "diag"),
                                     "detail": getattr(diag, "detail", str(diag))})
        self.clock_ms = max(self.clock_ms, t_ms)
        return rows

    def _match_ack(self, fields: dict, t_ms: int):
        for row in self.commands:
            if row["status"] == "pending" and row["opcode"] == fields["opcode"]:
                row["status"] = "acked" if fields["ok"] else "rejected"
                row["ack_seq"] = fields["seq"]
                row["ack_ok"] = fields["ok"]
                row["acked_t_ms"] = t_ms
                return

    def ingest_image(self, image: ImageRaster, report: DecodeReport,
                     image_id: int | None, t_ms: int) -> dict:
        if image_id is None:
            image_id = len(self.images)
        row = {"image_id": image_id, "t_ms": t_ms,
               "vis_ok": report.vis_ok, "lines_synced": report.lines_synced,
               "lines_filled": report.lines_filled,
               "mean_sync_error_ms": round(report.mean_sync_error_ms, 4)}
        self.images.append(row)
        self.decoded_rasters[image_id] = image
        self.clock_ms = max(self.clock_ms, t_ms)
        if self.session_dir:
            gdir = self.session_dir / "ground" / "images"
            gdir.mkdir(parents=True, exist_ok=True)
            ppm_write(image, gdir / f"{image_id:03d}.ppm")
            (gdir / f"{image_id:03d}.json").write_text(
                json.dumps(row, sort_keys=True) + "\n")
        return row

    # -- persistence ------------------------------------------------------------

    def save(self):
        if not self.session_dir:
            return
        gdir = self.session_dir / "ground"
        gdir.mkdir(parents=True, exist_ok=True)
        with open(gdir / "frames.jsonl", "w") as f:
            for row in self.frames:
                f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
        with open(gdir / "commands.jsonl", "w") as f:
            for row in self.commands:
                f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
        summary = {
            "frames": len(self.frames),
            "images": len(self.images),
            "commands": {s: sum(1 for c in self.commands if c["status"] == s)
                         for s in ("pending", "acked", "rejected", "failed-timeout")},
            "diagnostics": len(self.diagnostics),
            "crc_errors": sum(1 for d in self.diagnostics if d["kind"] == "crc_error"),
        }
        (gdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


class GroundStation:
    """Receives kernel downlink segments through the channel, in order."""

    def __init__(self, scenario: Scenario, session: GsSession):
        self.scenario = scenario
        self.session = session
        self._seen_segments = 0
        self._seen_uplinks = 0
        self._pending_meta: int | None = None

    def _channel(self, audio: AudioBuffer, index: int) -> AudioBuffer:
        if self.scenario.snr_db is None:
            return audio
        seed = int(np.random.SeedSequence(
            [self.scenario.seed & 0x7FFFFFFF, 2, index]).generate_state(1)[0])
        return awgn_apply(audio, self.scenario.snr_db, seed)

    def poll(self, kernel: MissionKernel, on_line=None, on_frames=None,
             on_image=None):
        """Process anything new the kernel produced since the last poll."""
        for rec in kernel.uplink_records[self._seen_uplinks:]:
            self.session.record_sent(rec.index, rec.start_ms, rec.opcode,
                                     rec.args, rec.source)
        self._seen_uplinks = len(kernel.uplink_records)

        for seg in kernel.downlink_segments[self._seen_segments:]:
            self.session.expire_commands(seg.end_ms)
            noisy = self._channel(seg.audio, seg.index)
            art = gs_decode(noisy, on_line=on_line)
            if art.image is not None:
                row = self.session.ingest_image(art.image, art.report,
                                                self._pending_meta, seg.end_ms)
                self._pending_meta = None
                if on_image:
                    on_image(row)
            if art.frames or art.diagnostics:
                rows = self.session.ingest_frames(art.frames, art.diagnostics,
                                                  seg.end_ms)
                for frame, row in zip(art.frames, rows):
                    if frame.ftype == FT_IMAGE_META:
                        self._pending_meta = row["fields"].get("image_id")
                if on_frames:
                    on_frames(rows)
        self._seen_segments = len(kernel.downlink_segments)


def run_pass(scenario: Scenario, duration_s: float | None = None,
             session_dir=None) -> tuple[GsSession, MissionKernel]:
    """One complete satellite-to-ground pass, fully deterministic."""
    session_path = Path(session_dir) if session_dir else None
    kernel = MissionKernel(scenario, session_dir=session_path)
    session = GsSession(session_dir=session_path)
    station = GroundStation(scenario, session)

    duration_ms = int((duration_s or scenario.duration_s) * 1000)
    while kernel.state.clock_ms < duration_ms:
        kernel.tick()
        station.poll(kernel)
    kernel.finalize()
    session.expire_commands(kernel.state.clock_ms)
    session.save()
    return session, kernel
