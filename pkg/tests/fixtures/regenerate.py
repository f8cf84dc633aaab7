"""Regenerate the frozen regression fixtures.

Run once from the repository root; the tests compare against the saved
arrays and never call this script.

    python tests/fixtures/regenerate.py
"""

import json
from pathlib import Path

import numpy as np

from streaming_ac import bottleneck as B
from streaming_ac import emformer as E
from streaming_ac import vocoder as V
from streaming_ac.config import toy_config
from streaming_ac.pipeline import Model, offline_convert
from streaming_ac.weights import init_weights

HERE = Path(__file__).parent


def main():
    rng = np.random.default_rng(1234)
    cfg = E.EmformerConfig(num_layers=2, hidden=16, heads=2, segment=4, left_context=8, right_context=4)
    w = E.init_weights(cfg, rng)
    x = rng.standard_normal((40, 16)).astype(np.float32)
    np.save(HERE / "emformer_golden.npy", E.emformer_offline(x, cfg, w))

    rng = np.random.default_rng(1234)
    wcfg = B.WaveNetConfig()
    w = B.init_weights(wcfg, rng)
    x = rng.standard_normal((32, 16)).astype(np.float32)
    np.save(HERE / "wavenet_golden.npy", B.wavenet_offline(x, wcfg, w))

    rng = np.random.default_rng(1234)
    vcfg = V.VocoderConfig()
    w = V.init_weights(vcfg, rng)
    np.save(HERE / "vocoder_zero_golden.npy",
            V.vocoder_offline(np.zeros((4, 16), np.float32), np.zeros(32, np.float32), vcfg, w))

    cfg = toy_config()
    model = Model(cfg, init_weights(cfg, 7))
    noise = (0.1 * np.random.default_rng(5).standard_normal(5 * cfg.sample_rate)).astype(np.float32)
    out = offline_convert(noise, model)
    g = np.zeros(cfg.embed_dim, np.float32)
    g[0] = 1.0
    zero = offline_convert(np.zeros(cfg.sample_rate, np.float32), model, g_override=g)
    np.savez(HERE / "pipeline_golden.npz", noise_len=out.shape[0], noise_every_40=out[::40],
             zero_len=zero.shape[0], zero_every_40=zero[::40])

    mask_cfg = E.EmformerConfig(segment=4, left_context=30, right_context=8)
    sparsity = {str(t): E.mask_sparsity(E.build_block_mask(t, mask_cfg)) for t in (200, 400, 800)}
    (HERE / "mask_sparsity.json").write_text(json.dumps(sparsity, indent=2) + "\n")


if __name__ == "__main__":
    main()
