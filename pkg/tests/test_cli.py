import json

import numpy as np
import pytest

from cubelink.cli import main
from cubelink.dtmf import dtmf_decode
from cubelink.audio import wav_read, wav_write, AudioBuffer, RATE
from cubelink.scenario import Scenario, UplinkEvent
from cubelink.sstv import color_bars, ppm_read, ppm_write, psnr


def run_cli(*argv):
    return main(list(argv))


class TestModemCommands:
    def test_afsk_round_trip(self, tmp_path, capsys):
        data = bytes(range(64))
        src = tmp_path / "data.bin"
        src.write_bytes(data)
        wav = tmp_path / "tx.wav"
        out = tmp_path / "rx.bin"
        assert run_cli("modem", "afsk-mod", "--in", str(src), "--out", str(wav)) == 0
        assert run_cli("modem", "afsk-demod", "--in", str(wav), "--out", str(out)) == 0
        assert out.read_bytes() == data

    def test_afsk_demod_hex_output(self, tmp_path, capsys):
        src = tmp_path / "d.bin"
        src.write_bytes(b"\xab\xcd")
        wav = tmp_path / "t.wav"
        run_cli("modem", "afsk-mod", "--in", str(src), "--out", str(wav))
        capsys.readouterr()
        assert run_cli("modem", "afsk-demod", "--in", str(wav)) == 0
        assert "abcd" in capsys.readouterr().out

    def test_sstv_round_trip(self, tmp_path):
        img = color_bars()
        src = tmp_path / "in.ppm"
        ppm_write(img, src)
        wav = tmp_path / "tx.wav"
        out = tmp_path / "out.ppm"
        assert run_cli("modem", "sstv-mod", "--in", str(src), "--out", str(wav)) == 0
        assert run_cli("modem", "sstv-demod", "--in", str(wav), "--out", str(out)) == 0
        assert psnr(img, ppm_read(out)) >= 25.0

    def test_sstv_demod_failure_exit_code(self, tmp_path):
        wav = tmp_path / "noise.wav"
        wav_write(AudioBuffer(np.zeros(RATE)), wav)
        assert run_cli("modem", "sstv-demod", "--in", str(wav),
                       "--out", str(tmp_path / "x.ppm")) == 1

    def test_dtmf_round_trip(self, tmp_path, capsys):
        wav = tmp_path / "cmd.wav"
        assert run_cli("modem", "dtmf-mod", "--symbols", "*011#", "--out", str(wav)) == 0
        capsys.readouterr()
        assert run_cli("modem", "dtmf-demod", "--in", str(wav)) == 0
        assert "*011#" in capsys.readouterr().out

    def test_channel_applies_noise(self, tmp_path):
        src = tmp_path / "d.bin"
        src.write_bytes(bytes(32))
        clean = tmp_path / "c.wav"
        noisy = tmp_path / "n.wav"
        run_cli("modem", "afsk-mod", "--in", str(src), "--out", str(clean))
        assert run_cli("channel", "--in", str(clean), "--out", str(noisy),
                       "--snr", "20", "--seed", "3") == 0
        a = wav_read(clean)
        b = wav_read(noisy)
        measured = 10 * np.log10(np.mean(a.samples ** 2)
                                 / np.mean((b.samples - a.samples) ** 2))
        assert 19.0 <= measured <= 21.0

    def test_usage_error_exit_code_2(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("modem", "afsk-mod")      # missing required flags
        assert exc.value.code == 2


class TestGsCommands:
    def test_gs_send(self, tmp_path):
        wav = tmp_path / "up.wav"
        assert run_cli("gs", "send", "05", "2", "--out", str(wav)) == 0
        symbols = "".join(e.symbol for e in dtmf_decode(wav_read(wav)))
        assert symbols == "*0527#"

    def test_gs_send_invalid(self, tmp_path):
        assert run_cli("gs", "send", "99", "--out", str(tmp_path / "x.wav")) == 1

    def test_gs_decode_frames(self, tmp_path, capsys):
        from cubelink.afsk import frame_encode, afsk_modulate

        wav = tmp_path / "dl.wav"
        wav_write(afsk_modulate(frame_encode(0x03, b"\x00\x01\x01\x01\x00")), wav)
        capsys.readouterr()
        assert run_cli("gs", "decode", "--in", str(wav)) == 0
        out = capsys.readouterr().out
        assert '"ftype": 3' in out

    def test_gs_decode_garbage_fails(self, tmp_path):
        wav = tmp_path / "g.wav"
        wav_write(AudioBuffer(np.zeros(RATE // 2)), wav)
        assert run_cli("gs", "decode", "--in", str(wav)) == 1


class TestRunCommand:
    def test_batch_run_summary(self, tmp_path, capsys):
        scenario = Scenario(seed=4, duration_s=25.0, snr_db=None,
                            uplinks=[UplinkEvent(t_s=16.0, opcode="01")])
        spath = tmp_path / "s.json"
        scenario.save(spath)
        session = tmp_path / "sess"
        assert run_cli("run", "--scenario", str(spath), "--session", str(session)) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["final_mode"] == "NOMINAL"
        assert summary["commands"][0]["status"] == "acked"
        assert (session / "log.jsonl").is_file()

    def test_bad_scenario_exit_1(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"duration_s": -5}')
        assert run_cli("run", "--scenario", str(bad)) == 1
