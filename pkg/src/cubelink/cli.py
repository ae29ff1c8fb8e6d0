"""Command-line entry points.

Exit codes: 0 success, 1 decode/validation failure, 2 usage error (argparse
default). Modem subcommands move single files; `run` executes a whole pass;
`gs` covers operator-side one-shots.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .afsk import afsk_demodulate, afsk_modulate, frame_parse
from .audio import RATE, AudioError, awgn_apply, resample_linear, wav_read, wav_write
from .dtmf import DtmfError, dtmf_decode, dtmf_encode
from .groundstation import gs_decode, gs_uplink, run_pass
from .scenario import Scenario, ScenarioError
from .sstv import SstvDecodeError, ppm_read, ppm_write, sstv_decode, sstv_encode


def _read_audio(path: str):
    buf = wav_read(path)
    if buf.rate != RATE:
        buf = resample_linear(buf, RATE)
    return buf


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


# -- modem ---------------------------------------------------------------------

def cmd_afsk_mod(args) -> int:
    data = Path(args.infile).read_bytes()
    if not data:
        return _fail("input file is empty")
    wav_write(afsk_modulate(data), args.out)
    print(f"modulated {len(data)} bytes -> {args.out}")
    return 0


def cmd_afsk_demod(args) -> int:
    data = afsk_demodulate(_read_audio(args.infile))
    if not data:
        return _fail("no decodable AFSK bytes")
    if args.out:
        Path(args.out).write_bytes(data)
        print(f"decoded {len(data)} bytes -> {args.out}")
    else:
        print(data.hex())
    if args.frames:
        frames, diags = frame_parse(data)
        print(f"{len(frames)} frame(s), {len(diags)} diagnostic(s)")
    return 0


def cmd_sstv_mod(args) -> int:
    wav_write(sstv_encode(ppm_read(args.infile)), args.out)
    print(f"encoded {args.infile} -> {args.out}")
    return 0


def cmd_sstv_demod(args) -> int:
    try:
        raster, report = sstv_decode(_read_audio(args.infile))
    except SstvDecodeError as exc:
        return _fail(str(exc))
    ppm_write(raster, args.out)
    print(f"decoded image -> {args.out} "
          f"(vis_ok={report.vis_ok} lines_synced={report.lines_synced} "
          f"mean_sync_error_ms={report.mean_sync_error_ms:.3f})")
    return 0


def cmd_dtmf_mod(args) -> int:
    try:
        buf = dtmf_encode(args.symbols)
    except DtmfError as exc:
        return _fail(str(exc))
    if len(buf) == 0:
        return _fail("no symbols to encode")
    wav_write(buf, args.out)
    print(f"encoded {args.symbols!r} -> {args.out}")
    return 0


def cmd_dtmf_demod(args) -> int:
    events = dtmf_decode(_read_audio(args.infile))
    if not events:
        return _fail("no DTMF events detected")
    for ev in events:
        print(f"{ev.symbol}  code={ev.code:04b}  "
              f"t={ev.t_start:.3f}..{ev.t_end:.3f}s")
    print("".join(ev.symbol for ev in events))
    return 0


def cmd_channel(args) -> int:
    buf = _read_audio(args.infile)
    try:
        wav_write(awgn_apply(buf, args.snr, args.seed), args.out)
    except AudioError as exc:
        return _fail(str(exc))
    print(f"applied {args.snr} dB AWGN (seed {args.seed}) -> {args.out}")
    return 0


# -- pass ------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        scenario = Scenario.load(args.scenario)
    except ScenarioError as exc:
        return _fail(str(exc))
    if args.serve:
        from .service import LivePassController, serve

        host, _, port = args.serve.partition(":")
        controller = LivePassController(scenario, session_dir=args.session,
                                        pace=args.pace)
        print(f"live pass on http://{host or '127.0.0.1'}:{port or 8151} "
              f"(pace {args.pace}x)")
        serve(controller, host=host or "127.0.0.1", port=int(port or 8151),
              static_dir=args.static)
        controller.stop()
        return 0
    session, kernel = run_pass(scenario, session_dir=args.session)
    summary = {
        "duration_s": scenario.duration_s,
        "final_mode": kernel.state.mode.name,
        "frames": len(session.frames),
        "images": len(session.images),
        "commands": [{"id": c["id"], "opcode": c["opcode"], "status": c["status"]}
                     for c in session.commands],
        "diagnostics": len(session.diagnostics),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_serve_session(args) -> int:
    from .service import SessionViewer, serve

    try:
        viewer = SessionViewer(args.session)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    host, _, port = args.addr.partition(":")
    print(f"serving session {args.session} on http://{host or '127.0.0.1'}:{port or 8151}")
    serve(viewer, host=host or "127.0.0.1", port=int(port or 8151),
          static_dir=args.static)
    return 0


# -- gs --------------------------------------------------------------------------

def cmd_gs_send(args) -> int:
    try:
        buf = gs_uplink(args.opcode, args.args)
    except DtmfError as exc:
        return _fail(str(exc))
    wav_write(buf, args.out)
    print(f"uplink {args.opcode}{(' ' + args.args) if args.args else ''} -> {args.out}")
    return 0


def cmd_gs_decode(args) -> int:
    art = gs_decode(_read_audio(args.infile))
    outdir = Path(args.session) if args.session else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    if art.image is not None:
        print(f"image: vis_ok={art.report.vis_ok} "
              f"lines_synced={art.report.lines_synced}/{art.report.lines_total}")
        if outdir:
            ppm_write(art.image, outdir / "decoded.ppm")
            print(f"wrote {outdir / 'decoded.ppm'}")
        return 0
    if art.frames:
        from .groundstation import decode_frame_fields

        rows = []
        for i, frame in enumerate(art.frames):
            row = {"seq": i, "ftype": frame.ftype,
                   "payload_hex": frame.payload.hex(),
                   "fields": decode_frame_fields(frame)}
            rows.append(row)
            print(json.dumps(row, sort_keys=True))
        if outdir:
            with open(outdir / "frames.jsonl", "w") as f:
                for row in rows:
                    f.write(json.dumps(row, sort_keys=True) + "\n")
        if any(getattr(d, "kind", "") == "crc_error" for d in art.diagnostics):
            print(f"{len(art.diagnostics)} diagnostic(s)", file=sys.stderr)
        return 0
    return _fail("nothing decodable in input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cubelink",
        description="cubesat audio-link simulator: modems, mission runs, ground station")
    sub = parser.add_subparsers(dest="command", required=True)

    modem = sub.add_parser("modem", help="standalone codec operations")
    msub = modem.add_subparsers(dest="modem_command", required=True)

    p = msub.add_parser("afsk-mod", help="bytes file -> AFSK WAV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_afsk_mod)

    p = msub.add_parser("afsk-demod", help="AFSK WAV -> bytes")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="output file (default: hex to stdout)")
    p.add_argument("--frames", action="store_true", help="also scan for telemetry frames")
    p.set_defaults(func=cmd_afsk_demod)

    p = msub.add_parser("sstv-mod", help="P6 PPM image -> Robot36 WAV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sstv_mod)

    p = msub.add_parser("sstv-demod", help="Robot36 WAV -> P6 PPM image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sstv_demod)

    p = msub.add_parser("dtmf-mod", help="symbol string -> DTMF WAV")
    p.add_argument("--symbols", required=True, help="e.g. '*011#'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dtmf_mod)

    p = msub.add_parser("dtmf-demod", help="DTMF WAV -> symbol events")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_dtmf_demod)

    p = sub.add_parser("channel", help="apply AWGN to a WAV at a target SNR")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--snr", type=float, required=True, help="target SNR in dB")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("run", help="run a scenario as a full pass")
    p.add_argument("--scenario", required=True)
    p.add_argument("--session", help="session directory to populate")
    p.add_argument("--serve", metavar="ADDR", help="host:port for the live service")
    p.add_argument("--pace", type=float, default=1.0,
                   help="logical seconds per wall second (live mode)")
    p.add_argument("--static", help="directory of console files to serve at /")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="serve a finished session read-only")
    p.add_argument("--session", required=True)
    p.add_argument("--addr", default="127.0.0.1:8151")
    p.add_argument("--static", help="directory of console files to serve at /")
    p.set_defaults(func=cmd_serve_session)

    gs = sub.add_parser("gs", help="ground-station one-shots")
    gsub = gs.add_subparsers(dest="gs_command", required=True)

    p = gsub.add_parser("send", help="build uplink command audio")
    p.add_argument("opcode", help="two-digit opcode, e.g. 01 for PING")
    p.add_argument("args", nargs="?", default="", help="argument digits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gs_send)

    p = gsub.add_parser("decode", help="decode downlink audio (auto-classify)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--session", help="directory for decoded artifacts")
    p.set_defaults(func=cmd_gs_decode)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AudioError, ScenarioError, DtmfError, FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
