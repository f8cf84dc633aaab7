"""
Latency under a simulated playback clock
========================================

Compute time is mocked as a fixed real-time factor per call, so the ledger
is pure clock arithmetic.  Below RTF 1 the latency stays at the 0.8 s
warm-up delay plus one call's compute; above it the player starves.
"""

import numpy as np

from streaming_ac import pipeline as P
from streaming_ac.config import toy_config
from streaming_ac.weights import init_weights

cfg = toy_config()
model = P.Model(cfg, init_weights(cfg, seed=7))
audio = (0.1 * np.random.default_rng(0).standard_normal(20 * cfg.sample_rate)).astype(np.float32)


def simulate(rtf):
    session = P.StreamSession(model, compute_time=P.constant_rtf(rtf, cfg.chunk_seconds))
    for chunk in P.split_chunks(audio, cfg):
        session.push_chunk(chunk)
    session.finalize()
    return P.latency_report(session)


print(" rtf   latency min..max (s)   underruns   min chunks ahead")
for rtf in (0.0, 0.25, 0.5, 0.9, 0.99, 1.0, 1.05, 1.5):
    led = simulate(rtf)
    print(f"{rtf:4.2f}   {min(led.latencies):.3f} .. {max(led.latencies):.3f}"
          f"{led.underruns:14d}{led.min_ahead if led.min_ahead is not None else '-':>17}")

# At exactly RTF 1 every call takes one chunk's worth of time, so the
# cushion left by the warm-up burst never drains and nothing underruns.

# The same ledger with measured compute time on this machine:
session = P.StreamSession(model)
for chunk in P.split_chunks(audio[: 5 * cfg.sample_rate], cfg):
    session.push_chunk(chunk)
session.finalize()
print(P.latency_report(session).summary())
