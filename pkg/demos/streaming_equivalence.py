"""
Streaming and offline conversion agree sample for sample
=========================================================

Push five seconds of noise through a streaming session one 80 ms chunk at a
time, then convert the same audio in one offline pass and compare.
"""

import numpy as np

from streaming_ac import pipeline as P
from streaming_ac.config import toy_config
from streaming_ac.weights import init_weights

cfg = toy_config()
model = P.Model(cfg, init_weights(cfg, seed=7))
audio = (0.1 * np.random.default_rng(5).standard_normal(5 * cfg.sample_rate)).astype(np.float32)

# Nothing comes out for the first nine chunks.  The tenth chunk fixes the
# speaker embedding and releases every frame whose look-ahead is complete.
session = P.StreamSession(model)
for i, chunk in enumerate(P.split_chunks(audio, cfg)):
    out = session.push_chunk(chunk)
    if i < 12:
        print(f"input chunk {i + 1:2d}: {len(out)} output chunk(s)")
session.finalize()
streamed = session.output()

offline = P.offline_convert(audio, model)
print("samples:", streamed.size, offline.size)
print("max abs difference:", float(np.abs(streamed - offline).max()))
print("bit identical:", np.array_equal(streamed, offline))
