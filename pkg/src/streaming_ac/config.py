"""Session configuration and the flat ``key=value`` config file format.

Keys are namespaced by component::

    session.warmup_chunks = 10
    emformer.right = 8
    vocoder.factors = 8,8,5
    vocoder.resblock_dilations = 1,3;1,3,5

Lists are comma separated; lists of lists use ``;`` between groups.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .bottleneck import WaveNetConfig
from .emformer import EmformerConfig
from .errors import ConfigurationError, FormatError
from .vocoder import VocoderConfig


@dataclass(frozen=True)
class SessionConfig:
    sample_rate: int = 16000
    hop: int = 320
    chunk_frames: int = 4
    warmup_chunks: int = 10
    vad_threshold: float = 0.01
    vad_hangover: int = 3
    n_bands: int = 16
    embed_dim: int = 32
    emformer: EmformerConfig = field(default_factory=EmformerConfig)
    wavenet: WaveNetConfig = field(default_factory=WaveNetConfig)
    vocoder: VocoderConfig = field(default_factory=VocoderConfig)

    def __post_init__(self):
        if self.chunk_frames != self.emformer.segment:
            raise ConfigurationError(
                f"chunk_frames ({self.chunk_frames}) must equal the encoder segment ({self.emformer.segment})"
            )
        if self.vocoder.hop != self.hop:
            raise ConfigurationError(f"vocoder upsampling {self.vocoder.hop} != hop {self.hop}")
        if self.wavenet.in_channels != self.emformer.hidden:
            raise ConfigurationError("bottleneck input width must equal encoder hidden size")
        if self.vocoder.in_channels != self.wavenet.out_channels:
            raise ConfigurationError("vocoder input width must equal bottleneck output width")
        if self.vocoder.embed_dim != self.embed_dim:
            raise ConfigurationError("vocoder embed_dim must equal session embed_dim")
        if self.warmup_chunks < 1:
            raise ConfigurationError("warmup_chunks must be >= 1")

    @property
    def chunk_samples(self) -> int:
        return self.chunk_frames * self.hop

    @property
    def chunk_seconds(self) -> float:
        return self.chunk_samples / self.sample_rate

    @property
    def warmup_seconds(self) -> float:
        return self.warmup_chunks * self.chunk_seconds


def toy_config(**overrides) -> SessionConfig:
    """Small default configuration used by tests, demos and the CLI."""
    return SessionConfig(**overrides)


def scaled_config(hidden: int = 16, wavenet_channels: int = 16, vocoder_channels: int = 32,
                  emformer: dict | None = None, wavenet: dict | None = None,
                  vocoder: dict | None = None, **session) -> SessionConfig:
    """Build a consistent config, threading channel widths between components."""
    em = EmformerConfig(**{"hidden": hidden, **(emformer or {})})
    wn = WaveNetConfig(**{"in_channels": em.hidden, "channels": wavenet_channels,
                          "out_channels": wavenet_channels, **(wavenet or {})})
    embed = session.get("embed_dim", 32)
    vc = VocoderConfig(**{"in_channels": wn.out_channels, "channels": vocoder_channels,
                          "embed_dim": embed, **(vocoder or {})})
    session.setdefault("chunk_frames", em.segment)
    session.setdefault("hop", vc.hop)
    return SessionConfig(emformer=em, wavenet=wn, vocoder=vc, **session)


def full_geometry_config() -> SessionConfig:
    """Timing geometry of the full-size model at reduced width.

    Segment 4, left context 30, right context 8 (0.16 s); the bottleneck
    (18 frames) and decoder (6 frames) add 0.48 s, for 0.64 s in total.
    """
    return scaled_config(
        hidden=16,
        emformer={"num_layers": 2, "heads": 2, "segment": 4, "left_context": 30, "right_context": 8},
        wavenet={"dilations": (1, 2, 4, 8, 1, 2)},
        vocoder={"pre_kernel": 9},
    )


# ---------------------------------------------------------------------------
# key=value files

# short file keys -> dataclass field names
_ALIASES = {
    "emformer": {"layers": "num_layers", "segment": "segment", "left": "left_context",
                 "right": "right_context", "ff": "ff_dim"},
    "wavenet": {"kernel": "kernel_size"},
    "vocoder": {"kernels": "upsample_kernels"},
    "session": {},
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(",".join(str(v) for v in grp) for grp in value)
        return ",".join(str(v) for v in value)
    return str(value)


def _parse(raw: str, like):
    raw = raw.strip()
    if isinstance(like, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise FormatError(f"expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        if like and isinstance(like[0], tuple):
            return tuple(tuple(int(v) for v in grp.split(",") if v.strip()) for grp in raw.split(";") if grp.strip())
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return raw


def dump_config(cfg: SessionConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            inv = {v: k for k, v in _ALIASES[f.name].items()}
            for sub in dataclasses.fields(value):
                key = inv.get(sub.name, sub.name)
                lines.append(f"{f.name}.{key} = {_format(getattr(value, sub.name))}")
        else:
            lines.append(f"session.{f.name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> SessionConfig:
    base = SessionConfig()
    values: dict[str, dict] = {"session": {}, "emformer": {}, "wavenet": {}, "vocoder": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in values or not name:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        name = _ALIASES[section].get(name, name)
        target = base if section == "session" else getattr(base, section)
        if not hasattr(target, name) or dataclasses.is_dataclass(getattr(target, name)):
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        try:
            values[section][name] = _parse(raw, getattr(target, name))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    try:
        return SessionConfig(
            emformer=dataclasses.replace(base.emformer, **values["emformer"]),
            wavenet=dataclasses.replace(base.wavenet, **values["wavenet"]),
            vocoder=dataclasses.replace(base.vocoder, **values["vocoder"]),
            **values["session"],
        )
    except (TypeError, ConfigurationError) as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path) -> SessionConfig:
    return parse_config(Path(path).read_text())


def save_config(cfg: SessionConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))
