import hashlib
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from conftest import noise
from streaming_ac import cli
from streaming_ac.audio_io import read_wav, write_wav
from streaming_ac.config import save_config, toy_config


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["init-weights", "--seed", "7", "--out", str(d / "w.sacw")]) == 0
    write_wav(d / "noise.wav", noise(5.0, 21), 16000)
    write_wav(d / "silence.wav", np.zeros(16000), 16000)
    write_wav(d / "empty.wav", np.zeros(0), 16000)
    write_wav(d / "short.wav", noise(1.6, 22), 16000)
    return d


def run(*args):
    return cli.main([str(a) for a in args])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestInitWeights:
    def test_byte_identical(self, tmp_path):
        run("init-weights", "--seed", 3, "--out", tmp_path / "a")
        run("init-weights", "--seed", 3, "--out", tmp_path / "b")
        run("init-weights", "--seed", 4, "--out", tmp_path / "c")
        assert digest(tmp_path / "a") == digest(tmp_path / "b") != digest(tmp_path / "c")

    def test_unwritable(self, tmp_path):
        assert run("init-weights", "--out", tmp_path / "missing" / "w") == 2

    def test_with_config(self, tmp_path, files):
        cfg = toy_config(warmup_chunks=6)
        save_config(cfg, tmp_path / "c.cfg")
        run("init-weights", "--config", tmp_path / "c.cfg", "--out", tmp_path / "w")
        assert run("verify", files / "short.wav", "--config", tmp_path / "c.cfg", "--weights", tmp_path / "w") == 0


class TestConvert:
    def test_silence(self, files, tmp_path):
        rep = tmp_path / "r.json"
        assert run("convert", files / "silence.wav", tmp_path / "o.wav", "--weights", files / "w.sacw",
                   "--report", rep) == 0
        out = read_wav(tmp_path / "o.wav", 16000)
        assert out.shape == (16000,) and not np.any(out)
        report = json.loads(rep.read_text())
        assert report["speech_chunks"] == 0 and report["chunks"] == 13

    def test_offline_and_streaming_files_identical(self, files, tmp_path):
        a, b = tmp_path / "s.wav", tmp_path / "o.wav"
        assert run("convert", files / "noise.wav", a, "--weights", files / "w.sacw") == 0
        assert run("convert", files / "noise.wav", b, "--mode", "offline", "--weights", files / "w.sacw") == 0
        assert a.read_bytes() == b.read_bytes()
        assert read_wav(a, 16000).shape == (80000,)

    def test_missing_weights(self, files, tmp_path):
        assert run("convert", files / "noise.wav", tmp_path / "o.wav") == 2
        assert run("convert", files / "noise.wav", tmp_path / "o.wav", "--weights", tmp_path / "nope") == 2

    def test_wrong_rate(self, files, tmp_path, capsys):
        write_wav(tmp_path / "r.wav", np.zeros(100), 22050)
        assert run("convert", tmp_path / "r.wav", tmp_path / "o.wav", "--weights", files / "w.sacw") == 2
        assert "22050" in capsys.readouterr().err

    def test_realtime_latency(self, files, tmp_path):
        rep = tmp_path / "r.json"
        assert run("convert", files / "short.wav", tmp_path / "o.wav", "--realtime", "--weights",
                   files / "w.sacw", "--report", rep) == 0
        report = json.loads(rep.read_text())
        jsonschema.validate(report, cli.REPORT_SCHEMA)
        assert 0.8 - 1e-3 <= report["latency"]["mean"] <= 0.8 + 0.15
        assert report["mode"] == "realtime"


class TestVerify:
    def test_pass(self, files, capsys):
        assert run("verify", files / "noise.wav", "--weights", files / "w.sacw") == 0
        assert "max_abs_diff=0.000e+00 first_mismatch=none" in capsys.readouterr().out

    def test_fault_injection(self, files, capsys):
        assert run("verify", files / "noise.wav", "--weights", files / "w.sacw", "--inject-fault") == 1
        out = capsys.readouterr().out
        assert "first_mismatch=none" not in out
        idx = int(out.split("first_mismatch=")[1])
        # corruption starts at input chunk 12 (frame 48); with 24 frames of
        # look-ahead, output chunk 6 is the first one that can see it
        assert 6 * 1280 <= idx < 7 * 1280

    def test_empty(self, files, capsys):
        assert run("verify", files / "empty.wav", "--weights", files / "w.sacw") == 0
        assert "zero-length" in capsys.readouterr().out

    def test_repeatable(self, files, tmp_path):
        for name in ("a", "b"):
            run("verify", files / "short.wav", "--weights", files / "w.sacw", "--report", tmp_path / name)
        a, b = (json.loads((tmp_path / n).read_text()) for n in "ab")
        a.pop("wall_seconds"), b.pop("wall_seconds")
        assert a == b


class TestBench:
    def test_mock_zero_cost(self, files, tmp_path):
        rep = tmp_path / "b.json"
        assert run("bench", "--weights", files / "w.sacw", "--seconds", 2, "--mock-rtf", 0, "--report", rep) == 0
        report = json.loads(rep.read_text())
        jsonschema.validate(report, cli.REPORT_SCHEMA)
        assert report["rtf"]["max"] == 0.0
        assert report["underruns"] == 0
        assert all(v == pytest.approx(0.8) for v in (report["latency"]["min"], report["latency"]["max"]))

    def test_stdout_report(self, files, capsys):
        assert run("bench", "--weights", files / "w.sacw", "--seconds", 1) == 0
        jsonschema.validate(json.loads(capsys.readouterr().out), cli.REPORT_SCHEMA)


def test_show_config(capsys):
    assert run("show-config") == 0
    assert "emformer.segment = 4" in capsys.readouterr().out


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "streaming_ac", "verify", str(files / "short.wav"),
                           "--weights", str(files / "w.sacw")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_first_mismatch():
    a = np.zeros(5, np.float32)
    b = a.copy()
    assert cli.first_mismatch(a, b) == (None, 0.0)
    b[3] = 1e-7
    idx, diff = cli.first_mismatch(a, b)
    assert idx == 3 and diff == pytest.approx(1e-7)
