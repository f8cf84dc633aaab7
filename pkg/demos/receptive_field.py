"""
Where the look-ahead comes from
===============================

The composed model needs the encoder's right context, plus the
bottleneck's and the decoder's future reach.  For the full-geometry
geometry this adds up to 32 frames, i.e. 0.64 s at hop 320 and 16 kHz.
"""

import numpy as np

from streaming_ac import pipeline as P
from streaming_ac.config import full_geometry_config, toy_config
from streaming_ac.weights import init_weights

for name, cfg in (("toy", toy_config()), ("full-geometry", full_geometry_config())):
    rf = P.receptive_field(cfg)
    print(f"{name:>13}: {rf.encoder_future} + {rf.bottleneck_future} + {rf.vocoder_future}"
          f" = {rf.future} frames = {rf.future_seconds:.2f} s")

# Check it empirically.  The encoder works in whole segments, so the reach is
# counted from the last frame of the chunk that holds an output frame.
cfg = full_geometry_config()
model = P.Model(cfg, init_weights(cfg, seed=11))
rng = np.random.default_rng(0)
audio = (0.1 * rng.standard_normal(4 * cfg.sample_rate)).astype(np.float32)
g = P.extract_speaker_embedding(audio[: cfg.warmup_chunks * cfg.chunk_samples], cfg, model.weights)
ref = P.offline_convert(audio, model, g_override=g)
future = P.receptive_field(cfg).future

chunk = 5
last = (chunk + 1) * cfg.chunk_frames - 1
keep = (last + 1) * cfg.hop
for extra in (future + 1, future):
    cut = (last + extra) * cfg.hop
    probe = audio.copy()
    probe[cut:] = 0.1 * rng.standard_normal(probe.size - cut)
    same = np.array_equal(P.offline_convert(probe, model, g_override=g)[:keep], ref[:keep])
    print(f"randomise input from frame {last + extra}: output up to frame {last} unchanged = {same}")
