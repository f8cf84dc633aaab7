"""Streaming inference runtime for a non-autoregressive accent conversion model.

Content encoder (segment attention with cached left context and right
look-ahead), dilated-convolution bottleneck and upsampling vocoder, each
with an incremental stepper that reproduces full-utterance output exactly.
"""

from .config import SessionConfig, full_geometry_config, load_config, save_config, scaled_config, toy_config
from .pipeline import (
    EnergyVAD,
    Model,
    StreamSession,
    extract_speaker_embedding,
    latency_report,
    offline_convert,
    offline_convert_gated,
    receptive_field,
    simulate_playback,
    stream_convert,
    vad_gate,
)
from .weights import init_weights, load_weights, save_weights

__version__ = "0.1.0"
