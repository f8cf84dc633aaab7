"""Streaming conversion runtime: chunk scheduler, offline oracle and latency ledger.

A :class:`StreamSession` follows the warm-up-then-cache schedule:

* input arrives in chunks of ``chunk_frames * hop`` samples;
* nothing is produced until ``warmup_chunks`` chunks are buffered;
* the warm-up call extracts the speaker embedding from the buffered audio
  and runs the buffered chunks through the cached stepper;
* every later chunk is a single cached step;
* playback may start once two output chunks exist.

:func:`offline_convert` runs the same model over a whole utterance and is
the oracle for every equivalence check.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bottleneck as B
from . import emformer as E
from . import kernels as K
from . import vocoder as V
from .config import SessionConfig
from .errors import ChunkingError, DegenerateInputError, StateError
from .weights import check_weights

LOG_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# front end


@lru_cache(maxsize=16)
def _analysis_basis(hop: int, n_bands: int, sample_rate: int) -> np.ndarray:
    n = np.arange(hop)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * (n + 0.5) / hop)
    centres = np.geomspace(80.0, 0.45 * sample_rate, n_bands)
    phase = 2 * np.pi * centres[None, :] * n[:, None] / sample_rate
    basis = np.concatenate([np.cos(phase), np.sin(phase)], axis=1) * window[:, None]
    return K.as_tensor(basis)


def band_energies(samples: np.ndarray, cfg: SessionConfig) -> np.ndarray:
    """Per-frame band power, ``(T, n_bands)``, from non-overlapping hop-sized frames."""
    samples = K.as_tensor(samples)
    if samples.shape[0] % cfg.hop:
        raise ChunkingError(f"{samples.shape[0]} samples is not a whole number of frames")
    frames = samples.reshape(-1, cfg.hop)
    proj = K.matmul(frames, _analysis_basis(cfg.hop, cfg.n_bands, cfg.sample_rate))
    c, s = proj[:, : cfg.n_bands], proj[:, cfg.n_bands :]
    return c * c + s * s


def log_bands(samples, cfg):
    return np.log(band_energies(samples, cfg) + K.DTYPE(LOG_FLOOR))


def content_features(samples, cfg: SessionConfig, weights: dict) -> np.ndarray:
    """Encoder input frames ``(T, hidden)``: frozen projection of log band energies."""
    return K.matmul(log_bands(samples, cfg), weights["frontend.w"]) + weights["frontend.b"]


def extract_speaker_embedding(samples, cfg: SessionConfig, weights: dict) -> np.ndarray:
    """Unit-norm speaker vector from mean-pooled log band energies.

    A deterministic stand-in for a trained speaker encoder.
    """
    samples = K.as_tensor(samples)
    if samples.size == 0 or not np.any(samples):
        raise DegenerateInputError("cannot extract a speaker embedding from silence")
    logs = log_bands(samples, cfg)
    pooled = K.seq_sum(logs, axis=0) / K.DTYPE(logs.shape[0])
    g = K.matmul(pooled[None, :], weights["speaker.w"])[0]
    return g / np.sqrt(K.seq_sum(g * g))


# ---------------------------------------------------------------------------
# model bundle


@dataclass
class Model:
    cfg: SessionConfig
    weights: dict

    def __post_init__(self):
        check_weights(self.weights, self.cfg)


def offline_convert(samples, model: Model, g_override=None) -> np.ndarray:
    """Full-segment conversion; output length is the input rounded up to whole chunks."""
    cfg, w = model.cfg, model.weights
    padded = pad_to_chunks(samples, cfg)
    if padded.size == 0:
        return padded
    if g_override is None:
        g = extract_speaker_embedding(padded[: cfg.warmup_chunks * cfg.chunk_samples], cfg, w)
    else:
        g = K.as_tensor(g_override)
    enc = E.emformer_offline(content_features(padded, cfg, w), cfg.emformer, w)
    bn = B.wavenet_offline(enc, cfg.wavenet, w)
    return V.vocoder_offline(bn, g, cfg.vocoder, w)


def pad_to_chunks(samples, cfg: SessionConfig) -> np.ndarray:
    samples = K.as_tensor(np.asarray(samples).reshape(-1))
    extra = (-samples.shape[0]) % cfg.chunk_samples
    if extra:
        samples = np.concatenate([samples, np.zeros(extra, K.DTYPE)])
    return samples


# ---------------------------------------------------------------------------
# receptive field


@dataclass(frozen=True)
class ReceptiveField:
    past: int
    future: int
    future_seconds: float
    encoder_future: int
    bottleneck_future: int
    vocoder_future: int


def receptive_field(cfg: SessionConfig) -> ReceptiveField:
    """Static look-ahead/look-back of the composed model, in feature frames.

    The encoder resolves whole segments, so ``future`` is counted from the
    last frame of the chunk holding an output frame: every output frame of
    chunk ``c`` is final once input frame ``(c+1)*S - 1 + future`` exists.
    """
    em = cfg.emformer
    enc = em.right_context
    bn = cfg.wavenet.future_reach
    voc = V.future_reach(cfg.vocoder)
    future = enc + bn + voc
    past = em.num_layers * (em.left_context + em.segment - 1) + bn + voc
    return ReceptiveField(past, future, future * cfg.hop / cfg.sample_rate, enc, bn, voc)


# ---------------------------------------------------------------------------
# voice activity


class EnergyVAD:
    """RMS-threshold detector with a hangover of ``hangover`` chunks."""

    def __init__(self, threshold: float, hangover: int):
        self.threshold = threshold
        self.hangover = hangover
        self.remaining = 0

    def __call__(self, samples) -> bool:
        return vad_gate(samples, self)


def rms(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def vad_gate(samples, vad: EnergyVAD) -> bool:
    """Speech flag for one chunk, updating ``vad``'s hangover counter."""
    if rms(samples) > vad.threshold:
        vad.remaining = vad.hangover
        return True
    if vad.remaining > 0:
        vad.remaining -= 1
        return True
    return False


# ---------------------------------------------------------------------------
# streaming session


@dataclass
class CallRecord:
    """One push_chunk/finalize call as seen by the latency ledger."""

    arrival: float
    compute: float
    chunks_processed: int
    outputs: int
    final: bool = False


@dataclass
class Caches:
    emformer: E.EmformerState
    wavenet: B.StreamConvState
    vocoder: V.VocoderState


class StreamSession:
    """Incremental converter for one speech segment.

    Args:
        model: configuration plus weights.
        compute_time: optional ``f(call_index, chunks_processed) -> seconds``
            replacing measured compute time in the ledger (simulation).
        on_step: test hook called with the session after every processed
            input chunk.

    A producer thread calls :meth:`push_chunk` and :meth:`finalize`; a
    consumer may call :meth:`wait_for_output` concurrently.
    """

    def __init__(self, model: Model, compute_time=None, on_step=None):
        self.model = model
        self.cfg = model.cfg
        self.compute_time = compute_time
        self.on_step = on_step
        self.input_chunks: list[np.ndarray] = []
        self.output_chunks: list[np.ndarray] = []
        self.cache: Caches | None = None
        self.g: np.ndarray | None = None
        self.records: list[CallRecord] = []
        self.playing = False
        self.finalized = False
        self._processed = 0
        self._pending = np.zeros(0, K.DTYPE)
        self._cond = threading.Condition()

    # -- helpers ----------------------------------------------------------

    def _start(self):
        cfg, w = self.cfg, self.model.weights
        warm = np.concatenate(self.input_chunks[: cfg.warmup_chunks])
        self.g = extract_speaker_embedding(warm, cfg, w)
        self.cache = Caches(
            E.EmformerState.fresh(cfg.emformer),
            B.StreamConvState.fresh(cfg.wavenet, w),
            V.VocoderState.fresh(cfg.vocoder, w),
        )

    def _encode_pending(self) -> np.ndarray:
        cfg, w = self.cfg, self.model.weights
        outs = [np.zeros((0, cfg.emformer.hidden), K.DTYPE)]
        while self._processed < len(self.input_chunks):
            feat = content_features(self.input_chunks[self._processed], cfg, w)
            out, _ = E.emformer_step(feat, self.cache.emformer, cfg.emformer, w)
            outs.append(out)
            self._processed += 1
            if self.on_step is not None:
                self.on_step(self)
        return np.concatenate(outs)

    def _decode(self, enc: np.ndarray, final: bool) -> np.ndarray:
        cfg, w = self.cfg, self.model.weights
        bn, _ = B.wavenet_step(enc, self.cache.wavenet, cfg.wavenet, w)
        if final:
            bn = np.concatenate([bn, B.wavenet_flush(self.cache.wavenet, cfg.wavenet, w)])
        audio, _ = V.vocoder_step(bn, self.g, self.cache.vocoder, cfg.vocoder, w)
        if final:
            audio = np.concatenate([audio, V.vocoder_flush(self.cache.vocoder, self.g, cfg.vocoder, w)])
        return audio

    def _collect(self, audio: np.ndarray) -> list[np.ndarray]:
        n = self.cfg.chunk_samples
        self._pending = np.concatenate([self._pending, audio])
        new = []
        while self._pending.shape[0] >= n:
            new.append(self._pending[:n])
            self._pending = self._pending[n:]
        return new

    def _record(self, started: float, processed: int, outputs: int, arrival, final=False):
        if self.compute_time is not None:
            compute = float(self.compute_time(len(self.records), processed))
        else:
            compute = time.perf_counter() - started
        if arrival is None:
            arrival = len(self.input_chunks) * self.cfg.chunk_seconds
        self.records.append(CallRecord(arrival, compute, processed, outputs, final))

    def _publish(self, new: list[np.ndarray]):
        with self._cond:
            self.output_chunks.extend(new)
            if len(self.output_chunks) >= 2:
                self.playing = True
            self._cond.notify_all()

    # -- public API -------------------------------------------------------

    @property
    def cache_initialized(self) -> bool:
        return self.cache is not None

    def push_chunk(self, samples, arrival: float | None = None) -> list[np.ndarray]:
        """Add one full input chunk; return the output chunks it completed."""
        if self.finalized:
            raise StateError("session already finalized")
        samples = K.as_tensor(np.asarray(samples).reshape(-1))
        if samples.shape[0] != self.cfg.chunk_samples:
            raise ChunkingError(
                f"expected {self.cfg.chunk_samples} samples per chunk, got {samples.shape[0]}"
            )
        started = time.perf_counter()
        self.input_chunks.append(samples)
        new: list[np.ndarray] = []
        before = self._processed
        if len(self.input_chunks) >= self.cfg.warmup_chunks:
            if self.cache is None:
                # warm-up: forward over every buffered chunk
                self._start()
            new = self._collect(self._decode(self._encode_pending(), final=False))
        self._record(started, self._processed - before, len(new), arrival)
        self._publish(new)
        return new

    def finalize(self, tail=None, arrival: float | None = None) -> np.ndarray:
        """End the segment: zero-pad ``tail`` into a last chunk, flush every cache.

        Returns all output samples not yet returned by :meth:`push_chunk`.
        """
        if self.finalized:
            raise StateError("session already finalized")
        started = time.perf_counter()
        if tail is not None and np.asarray(tail).size:
            tail = K.as_tensor(np.asarray(tail).reshape(-1))
            if tail.shape[0] > self.cfg.chunk_samples:
                raise ChunkingError("final partial chunk is longer than a chunk")
            self.input_chunks.append(pad_to_chunks(tail, self.cfg))
        before = self._processed
        new: list[np.ndarray] = []
        if self.input_chunks:
            if self.cache is None:
                self._start()
            enc = self._encode_pending()
            enc = np.concatenate([enc, E.emformer_flush(self.cache.emformer, self.cfg.emformer, self.model.weights)])
            new = self._collect(self._decode(enc, final=True))
            assert self._pending.shape[0] == 0
        self._record(started, self._processed - before, len(new), arrival, final=True)
        self._publish(new)
        # consumers treat "finalized and no chunk m" as end of stream, so the
        # flag flips only after the last chunks are visible
        with self._cond:
            self.finalized = True
            self.playing = self.playing or bool(self.output_chunks)
            self._cond.notify_all()
        if not new:
            return np.zeros(0, K.DTYPE)
        return np.concatenate(new)

    def wait_for_output(self, index: int, timeout: float | None = None) -> np.ndarray | None:
        """Block until output chunk ``index`` exists (or the session ends)."""
        with self._cond:
            self._cond.wait_for(
                lambda: len(self.output_chunks) > index or self.finalized, timeout
            )
            if len(self.output_chunks) > index:
                return self.output_chunks[index]
            return None

    def output(self) -> np.ndarray:
        if not self.output_chunks:
            return np.zeros(0, K.DTYPE)
        return np.concatenate(self.output_chunks)


# ---------------------------------------------------------------------------
# latency ledger


@dataclass
class LatencyLedger:
    chunk_seconds: float
    compute: list[float]
    rtf: list[float]
    emit_times: list[float]
    play_times: list[float]
    latencies: list[float]
    underruns: int
    ahead_violations: int
    min_ahead: int | None
    playback_start: float | None

    @property
    def max_rtf(self) -> float:
        return max(self.rtf) if self.rtf else 0.0

    @property
    def mean_rtf(self) -> float:
        return float(np.mean(self.rtf)) if self.rtf else 0.0

    def summary(self) -> dict:
        lat = self.latencies
        return {
            "chunks_out": len(self.play_times),
            "rtf_max": self.max_rtf,
            "rtf_mean": self.mean_rtf,
            "latency_min": min(lat) if lat else None,
            "latency_mean": float(np.mean(lat)) if lat else None,
            "latency_max": max(lat) if lat else None,
            "underruns": self.underruns,
            "ahead_violations": self.ahead_violations,
            "min_ahead": self.min_ahead,
        }


_EPS = 1e-9


def simulate_playback(records: list[CallRecord], chunk_seconds: float) -> LatencyLedger:
    """Replay the producer calls against a virtual player clock.

    Calls run back to back on one compute resource: a call starts at
    ``max(arrival, previous finish)``.  The player starts when the second
    output chunk exists (or when the last one does, for shorter outputs)
    and then wants chunk ``m`` every ``chunk_seconds``; a chunk that is not
    ready in time is an underrun and shifts the rest of playback.
    """
    d = chunk_seconds
    free = 0.0
    emit: list[float] = []
    for rec in records:
        finish = max(rec.arrival, free) + rec.compute
        free = finish
        emit.extend([finish] * rec.outputs)
    rtf = [rec.compute / d for rec in records]
    compute = [rec.compute for rec in records]
    if not emit:
        return LatencyLedger(d, compute, rtf, [], [], [], 0, 0, None, None)

    start = emit[1] if len(emit) >= 2 else emit[-1]
    play = [start]
    underruns = 0
    for m in range(1, len(emit)):
        due = play[-1] + d
        if emit[m] > due + _EPS:
            underruns += 1
            play.append(emit[m])
        else:
            play.append(due)
    latencies = [p - m * d for m, p in enumerate(play)]

    # output-ahead contract, checked at every emission and playback tick
    total = len(emit)
    violations = 0
    min_ahead = None
    for t in sorted(set(emit + play)):
        if t < start - _EPS:
            continue
        emitted = sum(1 for e in emit if e <= t + _EPS)
        cursor = sum(1 for p in play if p <= t + _EPS) - 1
        ahead = emitted - cursor
        if ahead < min(2, total - cursor):
            violations += 1
        if total - cursor >= 2:
            min_ahead = ahead if min_ahead is None else min(min_ahead, ahead)
    return LatencyLedger(d, compute, rtf, emit, play, latencies, underruns, violations, min_ahead, start)


def latency_report(session: StreamSession) -> LatencyLedger:
    if not session.finalized:
        raise StateError("latency report needs a finalized session")
    return simulate_playback(session.records, session.cfg.chunk_seconds)


def constant_rtf(rtf: float, chunk_seconds: float):
    """Mock compute model: every call takes ``rtf * chunk_seconds``."""
    return lambda call, processed: rtf * chunk_seconds


# ---------------------------------------------------------------------------
# whole-stream drivers with VAD gating


def split_chunks(samples, cfg: SessionConfig) -> list[np.ndarray]:
    padded = pad_to_chunks(samples, cfg)
    n = cfg.chunk_samples
    return [padded[i : i + n] for i in range(0, padded.shape[0], n)]


def vad_flags(chunks, cfg: SessionConfig) -> list[bool]:
    vad = EnergyVAD(cfg.vad_threshold, cfg.vad_hangover)
    return [vad(c) for c in chunks]


def speech_segments(flags: list[bool]) -> list[tuple[int, int]]:
    """Maximal runs of speech chunks as ``[start, end)`` chunk index pairs."""
    segs, start = [], None
    for i, f in enumerate(flags + [False]):
        if f and start is None:
            start = i
        elif not f and start is not None:
            segs.append((start, i))
            start = None
    return segs


@dataclass
class StreamResult:
    output: np.ndarray
    flags: list[bool]
    sessions: list[tuple[int, StreamSession]] = field(default_factory=list)


def stream_convert(samples, model: Model, use_vad: bool = True, compute_time=None, on_step=None) -> StreamResult:
    """Chunk the input, gate it with the VAD and stream each speech run.

    Non-speech chunks become silence.  The output has the input's length.
    """
    cfg = model.cfg
    n_in = np.asarray(samples).size
    chunks = split_chunks(samples, cfg)
    vad = EnergyVAD(cfg.vad_threshold, cfg.vad_hangover)
    out = np.zeros(len(chunks) * cfg.chunk_samples, K.DTYPE)
    flags: list[bool] = []
    sessions: list[tuple[int, StreamSession]] = []
    session = None
    start = 0

    def close():
        session.finalize()
        seg = session.output()
        out[start * cfg.chunk_samples : start * cfg.chunk_samples + seg.shape[0]] = seg

    for i, chunk in enumerate(chunks):
        flag = vad(chunk) if use_vad else True
        flags.append(flag)
        if flag:
            if session is None:
                session = StreamSession(model, compute_time=compute_time, on_step=on_step)
                sessions.append((i, session))
                start = i
            session.push_chunk(chunk)
        elif session is not None:
            close()
            session = None
    if session is not None:
        close()
    return StreamResult(out[:n_in], flags, sessions)


def offline_convert_gated(samples, model: Model, use_vad: bool = True) -> np.ndarray:
    """Offline counterpart of :func:`stream_convert` (same VAD segmentation)."""
    cfg = model.cfg
    n_in = np.asarray(samples).size
    chunks = split_chunks(samples, cfg)
    flags = vad_flags(chunks, cfg) if use_vad else [True] * len(chunks)
    out = np.zeros(len(chunks) * cfg.chunk_samples, K.DTYPE)
    for a, b in speech_segments(flags):
        seg = np.concatenate(chunks[a:b])
        out[a * cfg.chunk_samples : b * cfg.chunk_samples] = offline_convert(seg, model)
    return out[:n_in]


# ---------------------------------------------------------------------------
# wall-clock run


@dataclass
class RealtimeResult:
    output: np.ndarray
    session: StreamSession
    play_times: list[float]
    latencies: list[float]
    underruns: int


def run_realtime(samples, model: Model, speed: float = 1.0) -> RealtimeResult:
    """Stream ``samples`` at wall-clock pace with a producer and a player thread.

    The producer delivers chunk ``j`` at ``(j+1) * chunk_seconds``; the
    player starts at the second output chunk and consumes one chunk per
    ``chunk_seconds``.  ``speed > 1`` compresses the clock (tests).
    """
    cfg = model.cfg
    d = cfg.chunk_seconds / speed
    chunks = split_chunks(samples, cfg)
    session = StreamSession(model)
    t0 = time.perf_counter()
    play_times: list[float] = []
    underruns = [0]

    def producer():
        for j, chunk in enumerate(chunks):
            delay = t0 + (j + 1) * d - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            session.push_chunk(chunk, arrival=(time.perf_counter() - t0) * speed)
        session.finalize(arrival=(time.perf_counter() - t0) * speed)

    def player():
        m = 0
        if session.wait_for_output(1) is None and session.wait_for_output(0) is None:
            return
        due = time.perf_counter()
        while True:
            now = time.perf_counter()
            if due > now:
                time.sleep(due - now)
            if len(session.output_chunks) <= m and not session.finalized:
                underruns[0] += 1
            if session.wait_for_output(m) is None:
                return
            start = max(due, time.perf_counter())
            play_times.append((start - t0) * speed)
            due = start + d
            m += 1

    threads = [threading.Thread(target=producer), threading.Thread(target=player)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lat = [p - m * cfg.chunk_seconds for m, p in enumerate(play_times)]
    return RealtimeResult(session.output()[: np.asarray(samples).size], session, play_times, lat, underruns[0])
