"""Named-tensor checkpoint archive.

Layout: magic ``HVCK`` | version u8 | 3 reserved bytes | header_len u64 |
UTF-8 JSON header | tensor payloads. The header maps each tensor name to its
shape and dtype plus the network spec, optional training config, and the
step-1 digest recorded when step-2 training began. Payloads are row-major
32-bit little-endian floats concatenated in sorted name order, so saving is
deterministic and loading is bit-exact.
"""

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .restoration import NetworkSpec

MAGIC = b"HVCK"
VERSION = 1
_HEAD = struct.Struct("<4sB3xQ")


@dataclass
class Checkpoint:
    """Weights plus the configuration needed to rebuild the network."""

    weights: dict  # name -> float32 ndarray, names prefixed "step1." / "step2."
    spec: NetworkSpec
    train_config: dict | None = None
    step1_frozen_hash: str | None = None

    def step1_digest(self):
        return digest_tensors({n: a for n, a in self.weights.items()
                               if n.startswith("step1.")})


def digest_tensors(arrays: dict) -> str:
    """SHA-256 over sorted (name, raw little-endian float32 bytes) pairs."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name], dtype="<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(path, ckpt: Checkpoint) -> str:
    """Atomic write (temp file + rename); returns the checkpoint digest."""
    names = sorted(ckpt.weights)
    header = {
        "format_version": VERSION,
        "tensors": {n: {"shape": list(ckpt.weights[n].shape), "dtype": "float32"}
                    for n in names},
        "network_spec": ckpt.spec.to_dict(),
        "train_config": ckpt.train_config,
        "step1_frozen_hash": ckpt.step1_frozen_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(ckpt.weights[n], dtype="<f4").tobytes()
                       for n in names)
    data = _HEAD.pack(MAGIC, VERSION, len(blob)) + blob + payload

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path, expected_spec: NetworkSpec | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size:
        raise FormatError("checkpoint shorter than its fixed header")
    magic, version, header_len = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if _HEAD.size + header_len > len(data):
        raise FormatError("truncated checkpoint header")
    try:
        header = json.loads(data[_HEAD.size:_HEAD.size + header_len])
    except json.JSONDecodeError as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc

    spec = NetworkSpec.from_dict(header["network_spec"])
    if expected_spec is not None and spec != expected_spec:
        raise ValidationError(
            f"checkpoint spec {spec} does not match requested spec {expected_spec}")

    weights = {}
    pos = _HEAD.size + header_len
    for name in sorted(header["tensors"]):
        info = header["tensors"][name]
        if info["dtype"] != "float32":
            raise FormatError(f"unsupported tensor dtype {info['dtype']}")
        count = int(np.prod(info["shape"], dtype=np.int64)) if info["shape"] else 1
        nbytes = count * 4
        if pos + nbytes > len(data):
            raise FormatError(f"truncated payload for tensor {name}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
        weights[name] = arr.reshape(info["shape"]).astype(np.float32)
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after tensor payloads")

    return Checkpoint(weights, spec, header.get("train_config"),
                      header.get("step1_frozen_hash"))


def checkpoint_file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()
