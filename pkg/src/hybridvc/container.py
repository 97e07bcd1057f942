"""Hybrid bitstream container: one lossy video stream plus lossless reference payloads.

Layout (all integers little-endian)::

    magic "HVC1" | version u8 | lossy_codec_id u8 | ref_codec_default u8 | reserved u8
    | width u32 | height u32 | frame_count u32 | ref_count u16
    | ref_count x (frame_index u32, codec_id u8, reserved 3B, offset u64, length u64)
    | lossy_len u64 | lossy bytes | reference payloads at the recorded offsets

Offsets are measured from the start of the container. ``mux`` is a pure
function of its arguments, so identical inputs produce identical bytes.
"""

import struct
from dataclasses import dataclass, field

from .errors import FormatError, ValidationError

MAGIC = b"HVC1"
VERSION = 1

_HEAD = struct.Struct("<4sBBBBIIIH")
_REF = struct.Struct("<IB3xQQ")
_LEN = struct.Struct("<Q")

# Worst-case framing overhead: fixed header + lossy length field + one table row per reference.
FIXED_OVERHEAD = _HEAD.size + _LEN.size          # 30 bytes
PER_REFERENCE_OVERHEAD = _REF.size               # 24 bytes


@dataclass
class ReferenceEntry:
    """One losslessly coded reference frame and where it sits in display order."""

    frame_index: int
    payload: bytes
    codec_id: int


@dataclass
class StreamMeta:
    width: int
    height: int
    frame_count: int
    lossy_codec_id: int
    version: int = VERSION


@dataclass
class HybridContainer:
    version: int
    lossy_codec_id: int
    frame_count: int
    width: int
    height: int
    lossy_bitstream: bytes
    references: list = field(default_factory=list)

    @property
    def meta(self) -> StreamMeta:
        return StreamMeta(self.width, self.height, self.frame_count,
                          self.lossy_codec_id, self.version)


def _validate_references(references, frame_count):
    if not references:
        raise ValidationError("at least one reference frame is required")
    seen = set()
    for ref in references:
        if ref.frame_index < 0:
            raise ValidationError(f"negative reference index {ref.frame_index}")
        if ref.frame_index >= frame_count:
            raise ValidationError(
                f"reference index {ref.frame_index} out of range for {frame_count} frames")
        if ref.frame_index in seen:
            raise ValidationError(f"duplicate reference index {ref.frame_index}")
        if not ref.payload:
            raise ValidationError(f"empty payload for reference {ref.frame_index}")
        if not 0 <= ref.codec_id <= 255:
            raise ValidationError(f"codec id {ref.codec_id} does not fit in one byte")
        seen.add(ref.frame_index)


def mux(lossy_bitstream: bytes, references, meta: StreamMeta) -> bytes:
    """Serialize one lossy bitstream plus reference payloads into container bytes."""
    if meta.frame_count < 1:
        raise ValidationError("frame_count must be >= 1")
    _validate_references(references, meta.frame_count)
    refs = sorted(references, key=lambda r: r.frame_index)

    ref_count = len(refs)
    header_size = _HEAD.size + ref_count * _REF.size
    lossy_start = header_size + _LEN.size
    payload_start = lossy_start + len(lossy_bitstream)

    table = bytearray()
    offset = payload_start
    for ref in refs:
        table += _REF.pack(ref.frame_index, ref.codec_id, offset, len(ref.payload))
        offset += len(ref.payload)

    out = bytearray()
    out += _HEAD.pack(MAGIC, meta.version, meta.lossy_codec_id, refs[0].codec_id, 0,
                      meta.width, meta.height, meta.frame_count, ref_count)
    out += table
    out += _LEN.pack(len(lossy_bitstream))
    out += lossy_bitstream
    for ref in refs:
        out += ref.payload
    return bytes(out)


def demux(container_bytes: bytes):
    """Inverse of :func:`mux`: returns ``(lossy_bitstream, references, meta)``."""
    if len(container_bytes) < _HEAD.size:
        raise FormatError("container shorter than fixed header")
    magic, version, lossy_codec_id, _ref_default, _rsvd, width, height, frame_count, ref_count = \
        _HEAD.unpack_from(container_bytes, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")

    pos = _HEAD.size
    table = []
    for _ in range(ref_count):
        if pos + _REF.size > len(container_bytes):
            raise FormatError("truncated reference table")
        frame_index, codec_id, offset, length = _REF.unpack_from(container_bytes, pos)
        table.append((frame_index, codec_id, offset, length))
        pos += _REF.size

    if pos + _LEN.size > len(container_bytes):
        raise FormatError("missing lossy stream length")
    (lossy_len,) = _LEN.unpack_from(container_bytes, pos)
    pos += _LEN.size
    if pos + lossy_len > len(container_bytes):
        raise FormatError("declared lossy stream length exceeds container size")
    lossy = container_bytes[pos: pos + lossy_len]

    references = []
    for frame_index, codec_id, offset, length in table:
        if offset + length > len(container_bytes):
            raise FormatError(
                f"reference {frame_index} payload of {length} bytes exceeds container size")
        references.append(ReferenceEntry(frame_index, container_bytes[offset: offset + length], codec_id))

    meta = StreamMeta(width, height, frame_count, lossy_codec_id, version)
    _validate_references(references, frame_count)
    return lossy, references, meta


def read_container(path) -> HybridContainer:
    with open(path, "rb") as fh:
        lossy, refs, meta = demux(fh.read())
    return HybridContainer(meta.version, meta.lossy_codec_id, meta.frame_count,
                           meta.width, meta.height, lossy, refs)


def write_container(path, lossy_bitstream, references, meta: StreamMeta) -> bytes:
    blob = mux(lossy_bitstream, references, meta)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob
