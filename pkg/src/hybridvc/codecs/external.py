"""Adapters around external encoder/decoder commands.

Commands are user-supplied templates with {input}, {output}, {qp}, {preset},
{width}, {height}, {fps} placeholders; bitstream bytes produced by the tool
are passed through untouched. Video interchange uses raw 8-bit planar
YCbCr 4:2:0 files; reference interchange uses binary PPM, which the usual
JPEG-XL tools read and write directly. The HYBRIDVC_TOOLDIR environment
variable is prepended to the executable search path.

Documented defaults for the usual tool set:

    HEVC_ENCODE  ffmpeg + libx265, fixed-QP, chosen preset
    HEVC_DECODE  ffmpeg back to raw 4:2:0
    VVC_ENCODE   vvencapp          VVC_DECODE  vvdecapp
    JXL_ENCODE   cjxl lossless     JXL_DECODE  djxl
"""

import os
import shlex
import shutil
import subprocess
import tempfile

import numpy as np

from ..errors import CodecProcessError, ValidationError
from ..video import Frame, VideoSequence, video_to_yuv420, yuv420_to_video

TOOLDIR_ENV = "HYBRIDVC_TOOLDIR"

HEVC_ENCODE = ("ffmpeg -y -loglevel error -f rawvideo -pix_fmt yuv420p -s {width}x{height} "
               "-r {fps} -i {input} -c:v libx265 -preset {preset} "
               "-x265-params qp={qp}:log-level=error -f hevc {output}")
HEVC_DECODE = "ffmpeg -y -loglevel error -i {input} -f rawvideo -pix_fmt yuv420p {output}"
VVC_ENCODE = "vvencapp -i {input} -s {width}x{height} -r {fps} --preset {preset} -q {qp} -o {output}"
VVC_DECODE = "vvdecapp -b {input} -o {output}"
JXL_ENCODE = "cjxl -d 0 {input} {output}"
JXL_DECODE = "djxl {input} {output}"


def _search_path():
    path = os.environ.get("PATH", os.defpath)
    tooldir = os.environ.get(TOOLDIR_ENV)
    if tooldir:
        path = tooldir + os.pathsep + path
    return path


def _run_template(template, mapping):
    if not template:
        raise ValidationError("external codec requires a command template")
    try:
        cmd = template.format(**mapping)
    except KeyError as exc:
        raise ValidationError(f"unknown placeholder {exc} in command template") from exc
    argv = shlex.split(cmd)
    if not argv:
        raise ValidationError("command template expanded to an empty command")
    exe = shutil.which(argv[0], path=_search_path())
    if exe is None:
        raise CodecProcessError(f"executable {argv[0]!r} not found "
                                f"(searched PATH and ${TOOLDIR_ENV})")
    argv[0] = exe
    proc = subprocess.run(argv, capture_output=True)
    if proc.returncode != 0:
        raise CodecProcessError(
            f"{argv[0]} exited with status {proc.returncode}",
            stderr=proc.stderr.decode(errors="replace"),
            returncode=proc.returncode,
        )


def encode_video(frames: VideoSequence, cfg):
    if frames.height % 2 or frames.width % 2:
        raise ValidationError("external video codecs require even dimensions (4:2:0)")
    raw = video_to_yuv420(frames)
    with tempfile.TemporaryDirectory(prefix="hybridvc_enc_") as tmp:
        src = os.path.join(tmp, "in.yuv")
        dst = os.path.join(tmp, "out.bin")
        with open(src, "wb") as fh:
            fh.write(raw)
        _run_template(cfg.command_template, dict(
            input=src, output=dst, qp=cfg.quality, preset=cfg.preset,
            width=frames.width, height=frames.height, fps=frames.fps,
        ))
        try:
            with open(dst, "rb") as fh:
                bitstream = fh.read()
        except FileNotFoundError as exc:
            raise CodecProcessError("encoder produced no output file") from exc
    if not bitstream:
        raise CodecProcessError("encoder produced an empty bitstream")
    return bitstream, 8 * len(bitstream)


def decode_video(bitstream: bytes, cfg, width=None, height=None, fps=30.0) -> VideoSequence:
    if width is None or height is None:
        raise ValidationError("external decode needs width/height hints (raw 4:2:0 output)")
    with tempfile.TemporaryDirectory(prefix="hybridvc_dec_") as tmp:
        src = os.path.join(tmp, "in.bin")
        dst = os.path.join(tmp, "out.yuv")
        with open(src, "wb") as fh:
            fh.write(bitstream)
        _run_template(cfg.decode_template, dict(
            input=src, output=dst, qp=cfg.quality, preset=cfg.preset,
            width=width, height=height, fps=fps,
        ))
        try:
            with open(dst, "rb") as fh:
                raw = fh.read()
        except FileNotFoundError as exc:
            raise CodecProcessError("decoder produced no output file") from exc
    return yuv420_to_video(raw, width, height, fps=fps)


def _write_ppm(path, u8):
    h, w, _ = u8.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(u8.tobytes())


def _read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise CodecProcessError("decoder output is not binary PPM")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise CodecProcessError(f"expected 8-bit PPM, got maxval {maxval}")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pix.reshape(h, w, 3)


def encode_reference(frame: Frame, cfg) -> bytes:
    with tempfile.TemporaryDirectory(prefix="hybridvc_ref_") as tmp:
        src = os.path.join(tmp, "in.ppm")
        dst = os.path.join(tmp, "out.jxl")
        _write_ppm(src, frame.to_uint8())
        _run_template(cfg.command_template, dict(
            input=src, output=dst, qp=cfg.quality, preset=cfg.preset,
            width=frame.width, height=frame.height, fps=0,
        ))
        try:
            with open(dst, "rb") as fh:
                payload = fh.read()
        except FileNotFoundError as exc:
            raise CodecProcessError("reference encoder produced no output file") from exc
    if not payload:
        raise CodecProcessError("reference encoder produced an empty payload")
    return payload


def decode_reference(payload: bytes, cfg) -> Frame:
    with tempfile.TemporaryDirectory(prefix="hybridvc_ref_") as tmp:
        src = os.path.join(tmp, "in.jxl")
        dst = os.path.join(tmp, "out.ppm")
        with open(src, "wb") as fh:
            fh.write(payload)
        _run_template(cfg.decode_template, dict(
            input=src, output=dst, qp=cfg.quality, preset=cfg.preset,
            width=0, height=0, fps=0,
        ))
        u8 = _read_ppm(dst)
    return Frame.from_uint8(u8)
