"""
Versioned little-endian checkpoint of a trained denoiser.

Layout:

    magic "ENTROSCK" | version u32 | float width u32
    patch_size, d_model, n_heads, n_layers, mlp_hidden, time_dim  u32 each
    train_tokens u32 | step u32 | diffusion steps u32
    beta_start f64 | beta_end f64
    tensor count u32
    per tensor: name length u16, UTF-8 name, ndim u8, dims u32 × ndim
    raw floats of every tensor, in table order
"""

import io
import logging
import math
import struct
from pathlib import Path

import numpy as np
import torch

from entroscale.core.errors import CheckpointError, CheckpointVersionError, OutputError
from entroscale.models.denoiser import DTYPE, DenoiserArch, EntropyDenoiser
from entroscale.services.toy_diffusion import TrainState, make_schedule
from entroscale.storage.tables import ensure_dir

logger = logging.getLogger(__name__)

MAGIC = b"ENTROSCK"
VERSION = 1
FLOAT_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

HEADER = struct.Struct("<8sII6IIIIddI")


def encode_checkpoint(state: TrainState, float_width: int = 8) -> bytes:
    if float_width not in FLOAT_DTYPES:
        raise ValueError(f"float width must be 4 or 8, got {float_width}")
    arch = state.arch
    sched = state.schedule
    params = list(state.model.named_parameters())

    out = io.BytesIO()
    out.write(
        HEADER.pack(
            MAGIC,
            VERSION,
            float_width,
            arch.patch_size,
            arch.d_model,
            arch.n_heads,
            arch.n_layers,
            arch.mlp_hidden,
            arch.time_dim,
            state.train_tokens,
            state.step,
            sched.steps,
            sched.beta_start,
            sched.beta_end,
            len(params),
        )
    )
    for name, param in params:
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<B", param.ndim))
        out.write(struct.pack(f"<{param.ndim}I", *param.shape))
    dtype = FLOAT_DTYPES[float_width]
    for _, param in params:
        out.write(param.detach().cpu().numpy().astype(dtype).tobytes())
    return out.getvalue()


def save_checkpoint(path: Path, state: TrainState, float_width: int = 8) -> Path:
    payload = encode_checkpoint(state, float_width)
    ensure_dir(path.parent)
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    logger.info("Saved checkpoint %s (step %d)", path, state.step)
    return path


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple[int, ...]:
        layout = struct.Struct(fmt)
        return layout.unpack(self.take(layout.size))


def decode_checkpoint(payload: bytes) -> TrainState:
    reader = _Reader(payload)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an entroscale checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {version} is not supported (expected {VERSION})"
        )

    reader.offset = 0
    fields = HEADER.unpack(reader.take(HEADER.size))
    float_width = fields[2]
    if float_width not in FLOAT_DTYPES:
        raise CheckpointError(f"unsupported float width {float_width}")
    arch_fields = fields[3:9]
    train_tokens, step, diffusion_steps = fields[9:12]
    beta_start, beta_end = fields[12:14]
    count = fields[14]

    if min(arch_fields) < 1:
        raise CheckpointError(f"invalid checkpoint header: architecture {arch_fields}")
    if diffusion_steps < 2:
        raise CheckpointError(
            f"invalid checkpoint header: {diffusion_steps} diffusion steps"
        )
    side = math.isqrt(train_tokens)
    if train_tokens < 2 or side * side != train_tokens:
        raise CheckpointError(
            f"invalid checkpoint header: T={train_tokens} is not a square token grid"
        )
    try:
        arch = DenoiserArch(*arch_fields)
        schedule = make_schedule(diffusion_steps, beta_start, beta_end)
    except (ValueError, ZeroDivisionError) as exc:
        raise CheckpointError(f"invalid checkpoint header: {exc}") from exc

    table = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("tensor name is not UTF-8") from exc
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I")
        table.append((name, dims))

    model = EntropyDenoiser(arch)
    params = dict(model.named_parameters())
    if sorted(params) != sorted(name for name, _ in table):
        raise CheckpointError("tensor table does not match the architecture")

    dtype = FLOAT_DTYPES[float_width]
    with torch.no_grad():
        for name, dims in table:
            target = params[name]
            if tuple(target.shape) != tuple(dims):
                raise CheckpointError(
                    f"{name}: stored shape {dims} != expected {tuple(target.shape)}"
                )
            raw = reader.take(int(np.prod(dims, dtype=np.int64)) * dtype.itemsize)
            values = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(np.float64)
            target.copy_(torch.from_numpy(values).to(DTYPE))
    if reader.offset != len(payload):
        raise CheckpointError("trailing bytes after tensor data")

    model.record_train_tokens(train_tokens)
    return TrainState(model, schedule, train_tokens, step=step)


def load_checkpoint(path: Path) -> TrainState:
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror or exc}") from exc
    state = decode_checkpoint(payload)
    logger.info(
        "Loaded checkpoint %s (step %d, T=%d)", path, state.step, state.train_tokens
    )
    return state
