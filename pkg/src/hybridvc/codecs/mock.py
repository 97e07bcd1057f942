"""Built-in deterministic codecs for hermetic tests and desk-scale training.

The lossy codec is a plain 8x8 block transform coder: luma-mapped channels
are scaled to the 8-bit range, transformed with an orthonormal type-II DCT
per block, and uniformly quantized with step

    delta = clamp(2 ** ((100 - quality) / 12), 1/256, 64)

so quality 100 is near-lossless and low qualities produce the blocking and
ringing artifacts the restoration network trains against. Its rate estimate
is the Shannon entropy of the quantized coefficient stream times the symbol
count, not the container byte count.

The lossless codec stores 8-bit samples behind a self-describing header,
with a per-image choice of spatial prediction filter (and green-channel
decorrelation) followed by a general-purpose byte compressor. Bit-exactness
at the stored bit depth is the only contract; ratio is best-effort.
"""

import struct
import zlib

import numpy as np
import scipy.fft

from ..errors import FormatError, ValidationError
from ..video import RGB, YCBCR444, Frame, VideoSequence, rgb_to_ycbcr, ycbcr_to_rgb

BLOCK = 8

_LOSSY_MAGIC = b"HVML"
_LOSSY_HEAD = struct.Struct("<4sBBBxIIIf")  # magic, version, quality, colorspace, T, H, W, fps

_REF_MAGIC = b"HVMR"
_REF_HEAD = struct.Struct("<4sBBBBBBIIB")  # magic, ver, filter, colorxform, cspace, depth, rsvd, H, W, C

_CSPACE_CODES = {RGB: 0, YCBCR444: 1}
_CSPACE_NAMES = {v: k for k, v in _CSPACE_CODES.items()}


def quant_step(quality: int) -> float:
    if not 1 <= quality <= 100:
        raise ValidationError(f"mock quality must be in [1, 100], got {quality}")
    return float(np.clip(2.0 ** ((100 - quality) / 12.0), 1.0 / 256.0, 64.0))


def _pad_to_block(plane):
    h, w = plane.shape[-2:]
    ph = (-h) % BLOCK
    pw = (-w) % BLOCK
    if ph or pw:
        pad = [(0, 0)] * (plane.ndim - 2) + [(0, ph), (0, pw)]
        plane = np.pad(plane, pad, mode="edge")
    return plane


def _blockwise_dct(planes):
    """Forward orthonormal 2-D DCT on every 8x8 tile of (..., H, W) planes."""
    *lead, h, w = planes.shape
    tiles = planes.reshape(*lead, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    coeffs = scipy.fft.dctn(tiles, type=2, norm="ortho", axes=(-3, -1))
    return coeffs.reshape(*lead, h, w)


def _blockwise_idct(coeffs):
    *lead, h, w = coeffs.shape
    tiles = coeffs.reshape(*lead, h // BLOCK, BLOCK, w // BLOCK, BLOCK)
    planes = scipy.fft.idctn(tiles, type=2, norm="ortho", axes=(-3, -1))
    return planes.reshape(*lead, h, w)


def _entropy_bits(symbols) -> float:
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / symbols.size
    return float(-(p * np.log2(p)).sum()) * symbols.size


def encode_video(frames: VideoSequence, quality: int):
    delta = quant_step(quality)
    pix = frames.pixels.astype(np.float64)
    if frames.color_space == RGB:
        pix = rgb_to_ycbcr(pix)
    # (T, C, H, W) in the 8-bit numeric range, padded to whole blocks
    planes = np.moveaxis(pix, -1, 1) * 255.0
    planes = _pad_to_block(planes)
    coeffs = _blockwise_dct(planes)
    q = np.rint(coeffs / delta).astype(np.int16)

    rate_bits = int(round(_entropy_bits(q)))
    head = _LOSSY_HEAD.pack(_LOSSY_MAGIC, 1, quality, _CSPACE_CODES[frames.color_space],
                            frames.frame_count, frames.height, frames.width, frames.fps)
    payload = zlib.compress(q.astype("<i2").tobytes(), 6)
    return head + payload, rate_bits


def decode_video(bitstream: bytes) -> VideoSequence:
    if len(bitstream) < _LOSSY_HEAD.size:
        raise FormatError("mock lossy bitstream shorter than its header")
    magic, version, quality, cspace, t, h, w, fps = _LOSSY_HEAD.unpack_from(bitstream, 0)
    if magic != _LOSSY_MAGIC:
        raise FormatError(f"bad mock lossy magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported mock lossy version {version}")
    if cspace not in _CSPACE_NAMES:
        raise FormatError(f"unknown color space code {cspace}")
    delta = quant_step(quality)
    ph = h + (-h) % BLOCK
    pw = w + (-w) % BLOCK
    try:
        raw = zlib.decompress(bitstream[_LOSSY_HEAD.size:])
    except zlib.error as exc:
        raise FormatError(f"corrupt mock lossy payload: {exc}") from exc
    expected = t * 3 * ph * pw * 2
    if len(raw) != expected:
        raise FormatError(f"mock lossy payload is {len(raw)} bytes, expected {expected}")
    q = np.frombuffer(raw, dtype="<i2").reshape(t, 3, ph, pw).astype(np.float64)
    planes = _blockwise_idct(q * delta)[:, :, :h, :w] / 255.0
    pix = np.moveaxis(planes, 1, -1)
    if _CSPACE_NAMES[cspace] == RGB:
        pix = ycbcr_to_rgb(pix)
    pix = np.clip(pix, 0.0, 1.0).astype(np.float32)
    return VideoSequence(pix, color_space=_CSPACE_NAMES[cspace], bit_depth=8, fps=fps)


# Lossless reference codec: prediction filters operate on uint8 arrays with
# wraparound arithmetic, so every choice below inverts exactly.

def _filter_left(a):
    r = a.copy()
    r[:, 1:] = a[:, 1:] - a[:, :-1]
    r[1:, 0] = a[1:, 0] - a[:-1, 0]
    return r


def _unfilter_left(r):
    a = r.astype(np.uint32)
    a[:, 0] = np.cumsum(a[:, 0], axis=0) % 256
    a = np.cumsum(a, axis=1) % 256
    return a.astype(np.int16)


def _filter_up(a):
    r = a.copy()
    r[1:] = a[1:] - a[:-1]
    r[0, 1:] = a[0, 1:] - a[0, :-1]
    return r


def _unfilter_up(r):
    a = r.astype(np.uint32)
    a[0] = np.cumsum(a[0], axis=0) % 256
    a = np.cumsum(a, axis=0) % 256
    return a.astype(np.int16)


def _filter_dd(a):
    r = a.copy()
    r[1:] = a[1:] - a[:-1]
    r2 = r.copy()
    r2[:, 1:] = r[:, 1:] - r[:, :-1]
    return r2


def _unfilter_dd(r):
    a = np.cumsum(r.astype(np.uint32), axis=1) % 256
    a = np.cumsum(a, axis=0) % 256
    return a.astype(np.int16)


_FILTERS = {
    0: (lambda a: a, lambda r: r),
    1: (_filter_left, _unfilter_left),
    2: (_filter_up, _unfilter_up),
    3: (_filter_dd, _unfilter_dd),
}


def encode_reference(frame: Frame) -> bytes:
    if frame.bit_depth != 8:
        raise ValidationError(f"mock lossless codec stores 8-bit samples, got depth {frame.bit_depth}")
    u8 = frame.to_uint8().astype(np.int16)
    h, w, c = u8.shape

    best = None
    for colorxform in (0, 1):
        arr = u8.copy()
        if colorxform:
            arr[..., 0] = arr[..., 0] - arr[..., 1]
            arr[..., 2] = arr[..., 2] - arr[..., 1]
        for fid, (ffwd, _) in _FILTERS.items():
            res = np.stack([ffwd(arr[..., ch]) for ch in range(c)], axis=-1)
            blob = zlib.compress((res % 256).astype(np.uint8).tobytes(), 6)
            if best is None or len(blob) < len(best[0]):
                best = (blob, fid, colorxform)

    blob, fid, colorxform = best
    head = _REF_HEAD.pack(_REF_MAGIC, 1, fid, colorxform, _CSPACE_CODES[frame.color_space],
                          frame.bit_depth, 0, h, w, c)
    return head + blob


def decode_reference(payload: bytes) -> Frame:
    if len(payload) < _REF_HEAD.size:
        raise FormatError("reference payload shorter than its header")
    magic, version, fid, colorxform, cspace, depth, _rsvd, h, w, c = _REF_HEAD.unpack_from(payload, 0)
    if magic != _REF_MAGIC:
        raise FormatError(f"bad reference magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported reference payload version {version}")
    if fid not in _FILTERS or cspace not in _CSPACE_NAMES:
        raise FormatError("unknown filter or color space code")
    try:
        raw = zlib.decompress(payload[_REF_HEAD.size:])
    except zlib.error as exc:
        raise FormatError(f"corrupt reference payload: {exc}") from exc
    if len(raw) != h * w * c:
        raise FormatError(f"reference payload is {len(raw)} samples, expected {h * w * c}")

    res = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c).astype(np.int16)
    _, finv = _FILTERS[fid]
    arr = np.stack([finv(res[..., ch]) for ch in range(c)], axis=-1)
    if colorxform:
        arr[..., 0] = (arr[..., 0] + arr[..., 1]) % 256
        arr[..., 2] = (arr[..., 2] + arr[..., 1]) % 256
    u8 = (arr % 256).astype(np.uint8)
    return Frame.from_uint8(u8, color_space=_CSPACE_NAMES[cspace])
