"""Binary checkpoints: magic, version, named f32 tensors, RNG state, digest.

Layout, all little-endian:

    "EANT"                      4-byte magic
    version                     u32 (currently 1)
    tensor count                u32
    per tensor:
        name length             u16, then UTF-8 name bytes
        rank                    u8
        dims                    u32 each
        payload                 f32 values, C order
    RNG state                   16 bytes (u64 state + 8 reserved zeros)
    config digest               32-byte sha256

Parameters are stored as 32-bit floats, so ``save_checkpoint`` first
rounds the live float64 parameters to that grid; a model that was just
saved therefore predicts exactly what its reloaded copy predicts. The
model configuration rides along as a reserved ``meta/config`` tensor and
the digest covers its canonical text form, so a file whose config block
was tampered with refuses to load.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import CheckpointError
from .graph import KERNEL_KINDS
from .model import ModelConfig, TrajectoryModel
from .rng import Xorshift64Star

MAGIC = b"EANT"
VERSION = 1
META_NAME = "meta/config"


def config_text(config: ModelConfig) -> str:
    """Canonical one-line-per-field rendering used for the digest.

    Float fields are quantized to f32 before rendering because that is
    the precision the meta tensor stores; without this, a config float
    that is not f32-representable would change its repr across a round
    trip and fail the digest check.
    """
    fields = [
        ("t_obs", config.t_obs),
        ("t_pred", config.t_pred),
        ("feat_dim", config.feat_dim),
        ("stack_layers", config.stack_layers),
        ("kernel", config.kernel),
        ("rbf_sigma", repr(float(np.float32(config.rbf_sigma)))),
        ("prelu_init", repr(float(np.float32(config.prelu_init)))),
    ]
    return "".join(f"{k} = {v}\n" for k, v in fields)


def _config_vector(config: ModelConfig) -> np.ndarray:
    return np.array([
        config.t_obs, config.t_pred, config.feat_dim, config.stack_layers,
        KERNEL_KINDS.index(config.kernel), config.rbf_sigma, config.prelu_init,
    ], dtype=np.float32)


def _config_from_vector(vec: np.ndarray) -> ModelConfig:
    if vec.shape != (7,):
        raise CheckpointError(f"malformed {META_NAME} tensor, shape {vec.shape}")
    kernel_idx = int(vec[4])
    if not 0 <= kernel_idx < len(KERNEL_KINDS):
        raise CheckpointError(f"unknown kernel index {kernel_idx}")
    config = ModelConfig(
        t_obs=int(vec[0]), t_pred=int(vec[1]), feat_dim=int(vec[2]),
        stack_layers=int(vec[3]), kernel=KERNEL_KINDS[kernel_idx],
        rbf_sigma=float(vec[5]), prelu_init=float(vec[6]),
    )
    config.validate()
    return config


def _encode_tensor(name: str, data: np.ndarray) -> bytes:
    # asarray keeps 0-d shapes, which ascontiguousarray would promote to 1-d
    payload = np.asarray(data, dtype=np.float32, order="C")
    raw = name.encode("utf-8")
    parts = [struct.pack("<H", len(raw)), raw, struct.pack("<B", payload.ndim)]
    parts += [struct.pack("<I", d) for d in payload.shape]
    parts.append(payload.tobytes())
    return b"".join(parts)


def checkpoint_bytes(model: TrajectoryModel, rng_state: int | None = None) -> bytes:
    """Serialize without touching the model (used by save and by tests)."""
    if rng_state is None:
        rng_state = Xorshift64Star(0).getstate()
    tensors = [(META_NAME, _config_vector(model.config))]
    tensors += [(name, p.data) for name, p in model.params.items()]
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    out += [_encode_tensor(name, data) for name, data in tensors]
    out.append(struct.pack("<Q", rng_state) + b"\x00" * 8)
    out.append(hashlib.sha256(config_text(model.config).encode("utf-8")).digest())
    return b"".join(out)


def save_checkpoint(model: TrajectoryModel, path: str, rng: Xorshift64Star | None = None) -> None:
    """Round the live parameters to f32 and write the file.

    The rounding is deliberate: it pins the in-memory model to exactly the
    values the file stores, so predictions made after a save match
    predictions made after a reload bit for bit.
    """
    for p in model.params.values():
        p.data = p.data.astype(np.float32).astype(np.float64)
    state = rng.getstate() if rng is not None else Xorshift64Star(0).getstate()
    blob = checkpoint_bytes(model, state)
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str) -> tuple[TrajectoryModel, Xorshift64Star]:
    """Rebuild the model and RNG stream recorded in ``path``.

    Raises CheckpointError for a bad magic, an unsupported version, any
    truncation, a tensor name the rebuilt model does not expect, a missing
    parameter, or a config digest mismatch.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    count = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        n_values = int(np.prod(shape)) if shape else 1
        payload = np.frombuffer(r.take(4 * n_values), dtype="<f4").reshape(shape)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        tensors[name] = payload.astype(np.float64)
    rng_state = struct.unpack("<Q", r.take(8))[0]
    r.take(8)
    digest = r.take(32)
    if r.pos != len(blob):
        raise CheckpointError(f"{len(blob) - r.pos} trailing bytes after checkpoint")

    if META_NAME not in tensors:
        raise CheckpointError(f"checkpoint has no {META_NAME} tensor")
    config = _config_from_vector(tensors.pop(META_NAME).astype(np.float32))
    if hashlib.sha256(config_text(config).encode("utf-8")).digest() != digest:
        raise CheckpointError("config digest mismatch")

    model = TrajectoryModel(config, seed=0)
    for name in tensors:
        if name not in model.params:
            raise CheckpointError(f"unknown tensor {name!r}")
    for name, param in model.params.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint is missing {name!r}")
        if tensors[name].shape != param.data.shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape}, "
                f"expected {param.data.shape}")
        param.data = tensors[name]
    rng = Xorshift64Star(0)
    rng.setstate(rng_state)
    return model, rng
