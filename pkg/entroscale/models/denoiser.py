"""
Self-attention denoiser for the toy diffusion model.

Images are cut into p×p patches; each patch becomes one token, so an H×W
image carries N = (H/p)·(W/p) tokens. Positions use a 2-D sinusoidal code
computed from patch coordinates, which keeps the network defined at any
resolution.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from entroscale.services import attention
from entroscale.services.attention import ScalePolicy
from entroscale.services.numeric_core import RngStream

DTYPE = torch.float64

# observer(layer_id, n_tokens, mean_entropy, fell_back)
AttentionObserver = Callable[[int, int, float, bool], None]


@dataclass(frozen=True, slots=True)
class DenoiserArch:
    patch_size: int = 2
    d_model: int = 32
    n_heads: int = 1
    n_layers: int = 2
    mlp_hidden: int = 64
    time_dim: int = 32

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 4 or self.time_dim % 2:
            raise ValueError("d_model must be a multiple of 4 and time_dim even")

    @property
    def d_key(self) -> int:
        return self.d_model // self.n_heads

    def token_count(self, height: int, width: int) -> int:
        return (height // self.patch_size) * (width // self.patch_size)


def sinusoid(positions: Tensor, dim: int) -> Tensor:
    """Transformer-style sin/cos code of `positions`, shape (len, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=DTYPE) / half
    )
    args = positions.to(DTYPE)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def grid_positions(grid_h: int, grid_w: int, dim: int) -> Tensor:
    """(grid_h·grid_w, dim) code: first half encodes the row, second the column."""
    rows = torch.arange(grid_h).repeat_interleave(grid_w)
    cols = torch.arange(grid_w).repeat(grid_h)
    return torch.cat([sinusoid(rows, dim // 2), sinusoid(cols, dim // 2)], dim=1)


def patchify(x: Tensor, patch: int) -> Tensor:
    """(B, H, W) → (B, N, p·p), patches in row-major order."""
    b, h, w = x.shape
    x = x.reshape(b, h // patch, patch, w // patch, patch)
    return x.permute(0, 1, 3, 2, 4).reshape(b, -1, patch * patch)


def unpatchify(tokens: Tensor, height: int, width: int, patch: int) -> Tensor:
    """Inverse of patchify."""
    b = tokens.shape[0]
    x = tokens.reshape(b, height // patch, width // patch, patch, patch)
    return x.permute(0, 1, 3, 2, 4).reshape(b, height, width)


class SelfAttentionSite(nn.Module):
    """
    Multi-head self-attention whose scaling factor comes from a ScalePolicy.

    The site remembers the token count it was trained at; under the
    entropy-preserving policy λ is anchored at that count.
    """

    train_tokens: Tensor

    def __init__(self, arch: DenoiserArch, layer_id: int) -> None:
        super().__init__()
        self.layer_id = layer_id
        self.n_heads = arch.n_heads
        self.d_key = arch.d_key
        d = arch.d_model
        self.w_q = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.w_k = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.w_v = nn.Linear(d, d, bias=False, dtype=DTYPE)
        self.w_o = nn.Linear(d, d, dtype=DTYPE)
        self.register_buffer("train_tokens", torch.zeros((), dtype=torch.int64))

    def site_policy(self, policy: ScalePolicy) -> ScalePolicy:
        recorded = int(self.train_tokens)
        return policy.with_train_tokens(recorded) if recorded >= 2 else policy

    def forward(
        self,
        h: Tensor,
        policy: ScalePolicy,
        observer: AttentionObserver | None = None,
    ) -> Tensor:
        b, n, d = h.shape
        choice = attention.resolve_scale(self.site_policy(policy), n, self.d_key)
        lam = choice.value

        def heads(x: Tensor) -> Tensor:
            return x.reshape(b, n, self.n_heads, self.d_key).transpose(1, 2)

        q, k, v = heads(self.w_q(h)), heads(self.w_k(h)), heads(self.w_v(h))
        weights = torch.softmax(lam * (q @ k.transpose(-2, -1)), dim=-1)

        if observer is not None:
            rows = weights.detach().cpu().numpy().reshape(-1, n)
            entropy = float(attention.entropy_of_rows(rows).mean())
            observer(self.layer_id, n, entropy, choice.fell_back)

        out = (weights @ v).transpose(1, 2).reshape(b, n, d)
        return self.w_o(out)


class DenoiserBlock(nn.Module):
    def __init__(self, arch: DenoiserArch, layer_id: int) -> None:
        super().__init__()
        self.attn = SelfAttentionSite(arch, layer_id)
        self.mlp = nn.Sequential(
            nn.Linear(arch.d_model, arch.mlp_hidden, dtype=DTYPE),
            nn.SiLU(),
            nn.Linear(arch.mlp_hidden, arch.d_model, dtype=DTYPE),
        )

    def forward(
        self,
        h: Tensor,
        policy: ScalePolicy,
        observer: AttentionObserver | None = None,
    ) -> Tensor:
        h = h + self.attn(h, policy, observer)
        return h + self.mlp(h)


class EntropyDenoiser(nn.Module):
    """ε-prediction network: patch embed → attention blocks → patch head."""

    def __init__(self, arch: DenoiserArch) -> None:
        super().__init__()
        self.arch = arch
        patch_dim = arch.patch_size * arch.patch_size
        self.token_embed = nn.Linear(patch_dim, arch.d_model, dtype=DTYPE)
        self.time_embed = nn.Linear(arch.time_dim, arch.d_model, dtype=DTYPE)
        self.blocks = nn.ModuleList(
            DenoiserBlock(arch, layer_id) for layer_id in range(arch.n_layers)
        )
        self.output_head = nn.Linear(arch.d_model, patch_dim, dtype=DTYPE)

    @property
    def attention_sites(self) -> list[SelfAttentionSite]:
        return [block.attn for block in self.blocks]

    def record_train_tokens(self, n_tokens: int) -> None:
        for site in self.attention_sites:
            site.train_tokens.fill_(n_tokens)

    def forward(
        self,
        x: Tensor,
        t: Tensor,
        policy: ScalePolicy,
        observer: AttentionObserver | None = None,
    ) -> Tensor:
        _, height, width = x.shape
        p = self.arch.patch_size
        h = self.token_embed(patchify(x, p))
        h = h + grid_positions(height // p, width // p, self.arch.d_model)
        h = h + self.time_embed(sinusoid(t, self.arch.time_dim))[:, None, :]
        for block in self.blocks:
            h = block(h, policy, observer)
        return unpatchify(self.output_head(h), height, width, p)


def init_parameters(model: nn.Module, rng: RngStream) -> None:
    """
    Seeded initialisation independent of torch's global RNG.

    Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero, drawn in
    named_parameters order from one Philox stream.
    """
    gen = rng.generator()
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("bias"):
                param.zero_()
                continue
            bound = 1.0 / math.sqrt(param.shape[-1])
            values = gen.uniform(-bound, bound, size=tuple(param.shape))
            param.copy_(torch.from_numpy(np.asarray(values, dtype=np.float64)))


def zero_parameters(model: nn.Module) -> None:
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
