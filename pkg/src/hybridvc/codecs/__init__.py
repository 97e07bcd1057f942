"""Codec adapters: built-in deterministic mock codecs and external tool wrappers.

Four codec ids exist. ``mock_lossy`` and ``mock_lossless`` are hermetic,
in-process reference implementations used by tests and the desk-scale
training preset. ``external_video`` and ``external_lossless`` shell out to
user-configured commands (ffmpeg/x265, VVenC/VVdeC, cjxl/djxl, ...) and pass
bitstream bytes through untouched.
"""

from dataclasses import dataclass

from ..errors import ValidationError
from ..video import Frame, VideoSequence

# Numeric tags recorded in container headers.
CODEC_IDS = {
    "mock_lossy": 1,
    "external_video": 2,
    "mock_lossless": 3,
    "external_lossless": 4,
}
CODEC_NAMES = {v: k for k, v in CODEC_IDS.items()}

LOSSY_CODECS = ("mock_lossy", "external_video")
LOSSLESS_CODECS = ("mock_lossless", "external_lossless")


@dataclass
class CodecConfig:
    """Which codec to run and how.

    ``quality`` is the QP for external codecs (0-63) and a 1-100 quality knob
    for the mock codec. Command templates are only used by external codecs and
    support {input}, {output}, {qp}, {preset}, {width}, {height}, {fps}
    placeholders.
    """

    codec_id: str = "mock_lossy"
    quality: int = 50
    command_template: str = ""
    decode_template: str = ""
    preset: str = "medium"

    def validate(self):
        if self.codec_id not in CODEC_IDS:
            raise ValidationError(f"unknown codec id {self.codec_id!r}")
        if self.codec_id.startswith("mock"):
            if not 1 <= self.quality <= 100:
                raise ValidationError(f"mock quality must be in [1, 100], got {self.quality}")
        else:
            if not 0 <= self.quality <= 63:
                raise ValidationError(f"external QP must be in [0, 63], got {self.quality}")
        return self

    @property
    def numeric_id(self):
        return CODEC_IDS[self.codec_id]


def encode_video(frames: VideoSequence, cfg: CodecConfig):
    """Compress a video; returns ``(bitstream, rate_bits)``."""
    cfg.validate()
    frames.validate()
    if cfg.codec_id not in LOSSY_CODECS:
        raise ValidationError(f"{cfg.codec_id} is not a video codec")
    if cfg.codec_id == "mock_lossy":
        from . import mock
        return mock.encode_video(frames, cfg.quality)
    from . import external
    return external.encode_video(frames, cfg)


def decode_video(bitstream: bytes, cfg: CodecConfig) -> VideoSequence:
    cfg.validate()
    if cfg.codec_id not in LOSSY_CODECS:
        raise ValidationError(f"{cfg.codec_id} is not a video codec")
    if cfg.codec_id == "mock_lossy":
        from . import mock
        return mock.decode_video(bitstream)
    from . import external
    return external.decode_video(bitstream, cfg)


def encode_reference(frame: Frame, cfg: CodecConfig) -> bytes:
    cfg.validate()
    frame.validate()
    if cfg.codec_id not in LOSSLESS_CODECS:
        raise ValidationError(f"{cfg.codec_id} is not a lossless reference codec")
    if cfg.codec_id == "mock_lossless":
        from . import mock
        return mock.encode_reference(frame)
    from . import external
    return external.encode_reference(frame, cfg)


def decode_reference(payload: bytes, cfg: CodecConfig) -> Frame:
    cfg.validate()
    if cfg.codec_id not in LOSSLESS_CODECS:
        raise ValidationError(f"{cfg.codec_id} is not a lossless reference codec")
    if cfg.codec_id == "mock_lossless":
        from . import mock
        return mock.decode_reference(payload)
    from . import external
    return external.decode_reference(payload, cfg)
