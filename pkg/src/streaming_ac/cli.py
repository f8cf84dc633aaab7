"""Command line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import pipeline as P
from .audio_io import read_wav, write_wav
from .config import SessionConfig, load_config
from .errors import ConfigurationError, FormatError
from .weights import init_weights, load_weights, save_weights

TOLERANCE = 1e-5

_STATS = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema", "mode", "input", "output", "sample_rate", "chunks", "speech_chunks",
                 "max_abs_diff", "first_mismatch", "rtf", "latency", "underruns", "wall_seconds"],
    "properties": {
        "schema": {"const": 1},
        "mode": {"enum": ["streaming", "offline", "realtime", "verify", "bench"]},
        "input": {"type": ["string", "null"]},
        "output": {"type": ["string", "null"]},
        "sample_rate": {"type": "integer"},
        "chunks": {"type": "integer", "minimum": 0},
        "speech_chunks": {"type": "integer", "minimum": 0},
        "max_abs_diff": _STATS,
        "first_mismatch": {"type": ["integer", "null"]},
        "rtf": {
            "type": "object",
            "required": ["max", "mean", "per_call"],
            "properties": {"max": _STATS, "mean": _STATS,
                           "per_call": {"type": "array", "items": {"type": "number"}}},
        },
        "latency": {
            "type": "object",
            "required": ["min", "mean", "max"],
            "properties": {"min": _STATS, "mean": _STATS, "max": _STATS},
        },
        "underruns": {"type": "integer", "minimum": 0},
        "wall_seconds": {"type": "number"},
    },
}


class UsageError(Exception):
    pass


def _report(mode, cfg, *, input=None, output=None, chunks=0, speech=0, diff=None, mismatch=None,
            rtf=(), latencies=(), underruns=0, wall=0.0) -> dict:
    rtf = [float(r) for r in rtf]
    lat = [float(v) for v in latencies]
    return {
        "schema": 1,
        "mode": mode,
        "input": str(input) if input is not None else None,
        "output": str(output) if output is not None else None,
        "sample_rate": cfg.sample_rate,
        "chunks": int(chunks),
        "speech_chunks": int(speech),
        "max_abs_diff": diff,
        "first_mismatch": mismatch,
        "rtf": {"max": max(rtf) if rtf else None,
                "mean": float(np.mean(rtf)) if rtf else None,
                "per_call": rtf},
        "latency": {"min": min(lat) if lat else None,
                    "mean": float(np.mean(lat)) if lat else None,
                    "max": max(lat) if lat else None},
        "underruns": int(underruns),
        "wall_seconds": float(wall),
    }


def _emit_report(report: dict, path) -> None:
    text = json.dumps(report, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _load_model(args) -> P.Model:
    cfg = load_config(args.config) if args.config else SessionConfig()
    if not args.weights:
        raise UsageError("--weights is required (create one with `init-weights`)")
    if not Path(args.weights).exists():
        raise UsageError(f"weights file {args.weights} does not exist")
    return P.Model(cfg, load_weights(args.weights))


def _session_stats(sessions):
    rtf, lat, under = [], [], 0
    for _, s in sessions:
        ledger = P.latency_report(s)
        rtf += ledger.rtf
        lat += ledger.latencies
        under += ledger.underruns
    return rtf, lat, under


def first_mismatch(a: np.ndarray, b: np.ndarray):
    """Index of the first differing sample (or None) and the max abs difference."""
    if a.shape != b.shape:
        return 0, float("inf")
    if a.size == 0:
        return None, 0.0
    diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
    bad = np.flatnonzero(diff > 0)
    return (int(bad[0]) if bad.size else None), float(diff.max())


# ---------------------------------------------------------------------------
# commands


def cmd_init_weights(args) -> int:
    cfg = load_config(args.config) if args.config else SessionConfig()
    try:
        save_weights(init_weights(cfg, args.seed), args.out)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    print(f"wrote {args.out}")
    return 0


def cmd_convert(args) -> int:
    model = _load_model(args)
    cfg = model.cfg
    samples = read_wav(args.input, cfg.sample_rate)
    t0 = time.perf_counter()
    n_chunks = len(P.split_chunks(samples, cfg))
    if args.realtime:
        res = P.run_realtime(samples, model)
        out = res.output
        report = _report("realtime", cfg, input=args.input, output=args.output, chunks=n_chunks,
                         speech=n_chunks, rtf=[r.compute / cfg.chunk_seconds for r in res.session.records],
                         latencies=res.latencies, underruns=res.underruns,
                         wall=time.perf_counter() - t0)
    elif args.mode == "offline":
        out = P.offline_convert_gated(samples, model)
        wall = time.perf_counter() - t0
        flags = P.vad_flags(P.split_chunks(samples, cfg), cfg)
        audio_s = n_chunks * cfg.chunk_seconds
        report = _report("offline", cfg, input=args.input, output=args.output, chunks=n_chunks,
                         speech=sum(flags), rtf=[wall / audio_s] if audio_s else [], wall=wall)
    else:
        res = P.stream_convert(samples, model)
        out = res.output
        rtf, lat, under = _session_stats(res.sessions)
        report = _report("streaming", cfg, input=args.input, output=args.output, chunks=n_chunks,
                         speech=sum(res.flags), rtf=rtf, latencies=lat, underruns=under,
                         wall=time.perf_counter() - t0)
    write_wav(args.output, out, cfg.sample_rate)
    if args.report:
        _emit_report(report, args.report)
    return 0


def _fault_hook(after: int):
    def hook(session):
        if session._processed != after:
            return
        em = session.cache.emformer
        if any(v.shape[0] for v in em.cache_v):
            em.cache_v = [v + np.float32(1.0) for v in em.cache_v]
        else:
            for buf in session.cache.wavenet.buffers():
                buf += np.float32(1.0)
    return hook


def cmd_verify(args) -> int:
    model = _load_model(args)
    cfg = model.cfg
    samples = read_wav(args.input, cfg.sample_rate)
    if samples.size == 0:
        print("max_abs_diff=0 first_mismatch=none (empty input, zero-length output)")
        return 0
    hook = _fault_hook(cfg.warmup_chunks + 2) if args.inject_fault else None
    t0 = time.perf_counter()
    streamed = P.stream_convert(samples, model, on_step=hook).output
    offline = P.offline_convert_gated(samples, model)
    idx, diff = first_mismatch(streamed, offline)
    print(f"max_abs_diff={diff:.3e} first_mismatch={'none' if idx is None else idx}")
    if args.report:
        _emit_report(_report("verify", cfg, input=args.input, chunks=len(P.split_chunks(samples, cfg)),
                             diff=diff, mismatch=idx, wall=time.perf_counter() - t0), args.report)
    return 0 if diff <= TOLERANCE else 1


def cmd_bench(args) -> int:
    model = _load_model(args)
    cfg = model.cfg
    rng = np.random.default_rng(args.seed)
    samples = (0.1 * rng.standard_normal(int(args.seconds * cfg.sample_rate))).astype(np.float32)
    compute = P.constant_rtf(args.mock_rtf, cfg.chunk_seconds) if args.mock_rtf is not None else None
    t0 = time.perf_counter()
    session = P.StreamSession(model, compute_time=compute)
    chunks = P.split_chunks(samples, cfg)
    for c in chunks:
        session.push_chunk(c)
    session.finalize()
    ledger = P.latency_report(session)
    _emit_report(_report("bench", cfg, chunks=len(chunks), speech=len(chunks), rtf=ledger.rtf,
                         latencies=ledger.latencies, underruns=ledger.underruns,
                         wall=time.perf_counter() - t0), args.report)
    return 0


def cmd_show_config(args) -> int:
    from .config import dump_config

    cfg = load_config(args.config) if args.config else SessionConfig()
    sys.stdout.write(dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streaming-ac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-weights", help="write seeded random weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("convert", help="convert a PCM16 mono WAV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=["streaming", "offline"], default="streaming")
    p.add_argument("--realtime", action="store_true",
                   help="pace chunks at wall-clock speed with a player thread (single segment, no VAD)")
    p.add_argument("--config")
    p.add_argument("--weights")
    p.add_argument("--report")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="check streaming output against offline output")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--weights")
    p.add_argument("--report")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="stream seeded noise and report real-time factors")
    p.add_argument("--config")
    p.add_argument("--weights")
    p.add_argument("--seconds", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mock-rtf", type=float, default=None,
                   help="replace measured compute time by RTF * chunk duration")
    p.add_argument("--report")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("show-config", help="print a config in key=value form")
    p.add_argument("--config")
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
