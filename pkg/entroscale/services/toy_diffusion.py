"""
Desk-scale DDPM around the self-attention denoiser.

The model is trained at one resolution (T tokens) and sampled at others
under either scaling policy, with the mean attention entropy of every
(timestep, layer) pair logged to an EntropyTrace.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import (
    EmptyBatch,
    IncompatibleResolution,
    InvalidRange,
    NonFiniteLoss,
    ShapeMismatch,
    StepOutOfRange,
)
from entroscale.models.denoiser import (
    DTYPE,
    AttentionObserver,
    DenoiserArch,
    EntropyDenoiser,
    init_parameters,
)
from entroscale.schemas.trace import EntropyRecord
from entroscale.services.attention import ScalePolicy
from entroscale.services.numeric_core import RngStream, Vector, frozen

logger = logging.getLogger(__name__)

# (count, rng) -> (count, size, size) batch of clean images
DataGenerator = Callable[[int, RngStream], Tensor]


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    steps: int
    beta_start: float
    beta_end: float
    betas: Vector
    alphas: Vector
    alpha_bars: Vector


def make_schedule(steps: int, beta_start: float, beta_end: float) -> DiffusionSchedule:
    """Linear β schedule with α = 1 − β and ᾱ_t = Π_{s≤t} α_s."""
    if steps < 2:
        raise InvalidRange(f"need at least 2 diffusion steps, got {steps}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidRange(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, steps)
    alphas = 1.0 - betas
    return DiffusionSchedule(
        steps=steps,
        beta_start=beta_start,
        beta_end=beta_end,
        betas=frozen(betas),
        alphas=frozen(alphas),
        alpha_bars=frozen(np.cumprod(alphas)),
    )


def forward_noise(
    x0: Tensor, t: int | Tensor, eps: Tensor, sched: DiffusionSchedule
) -> Tensor:
    """x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε; `t` is one step or one per item."""
    if x0.shape != eps.shape:
        raise ShapeMismatch(f"x0 {tuple(x0.shape)} vs noise {tuple(eps.shape)}")
    steps = torch.as_tensor(t)
    if torch.any(steps < 0) or torch.any(steps >= sched.steps):
        raise StepOutOfRange(f"timestep outside [0, {sched.steps})")

    alpha_bar = torch.from_numpy(sched.alpha_bars.copy()).to(x0.dtype)[steps]
    if alpha_bar.ndim == 1:
        alpha_bar = alpha_bar.reshape(-1, *([1] * (x0.ndim - 1)))
    return torch.sqrt(alpha_bar) * x0 + torch.sqrt(1 - alpha_bar) * eps


@dataclass
class EntropyTrace:
    """Mean attention entropy per (timestep, layer) gathered while sampling."""

    records: list[EntropyRecord] = field(default_factory=list)

    def append(self, record: EntropyRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def by_key(self) -> dict[tuple[int, int], float]:
        return {(r.timestep, r.layer_id): r.mean_entropy for r in self.records}

    def mean_entropy(self) -> float:
        return float(np.mean([r.mean_entropy for r in self.records]))


@dataclass(frozen=True, slots=True)
class TrainConfig:
    arch: DenoiserArch
    image_size: int
    steps: int
    batch_size: int
    learning_rate: float
    momentum: float
    diffusion_steps: int
    beta_start: float
    beta_end: float

    @classmethod
    def from_experiment(cls, config: ExperimentConfig) -> "TrainConfig":
        return cls(
            arch=DenoiserArch(
                patch_size=config.patch_size,
                d_model=config.d_model,
                n_heads=config.n_heads,
                n_layers=config.n_layers,
                mlp_hidden=config.mlp_hidden,
            ),
            image_size=config.image_size,
            steps=config.train_steps,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            momentum=config.momentum,
            diffusion_steps=config.diffusion_steps,
            beta_start=config.beta_start,
            beta_end=config.beta_end,
        )


class TrainState:
    """Denoiser parameters plus the bookkeeping of the run that produced them."""

    def __init__(
        self,
        model: EntropyDenoiser,
        schedule: DiffusionSchedule,
        train_tokens: int,
        step: int = 0,
        optimizer: torch.optim.Optimizer | None = None,
        loss_history: list[float] | None = None,
    ) -> None:
        self.model = model
        self.schedule = schedule
        self._train_tokens = train_tokens
        self.step = step
        self.optimizer = optimizer
        self.loss_history = loss_history if loss_history is not None else []

    @property
    def train_tokens(self) -> int:
        """Token count at the training resolution, fixed for the run."""
        return self._train_tokens

    @property
    def arch(self) -> DenoiserArch:
        return self.model.arch

    @property
    def train_size(self) -> int:
        """Side of the square training images."""
        return math.isqrt(self._train_tokens) * self.arch.patch_size


def two_blob_images(count: int, size: int, rng: RngStream) -> Tensor:
    """
    Synthetic training data: each image is the sum of two isotropic Gaussian
    blobs on a zero background. Centres are uniform over the image, peak
    amplitudes uniform in [0.5, 1], widths uniform in [0.6, 1.4] pixels.
    """
    gen = rng.generator()
    centres = gen.uniform(0, size - 1, size=(count, 2, 2))
    amplitudes = gen.uniform(0.5, 1.0, size=(count, 2))
    widths = gen.uniform(0.6, 1.4, size=(count, 2))

    coords = np.arange(size, dtype=np.float64)
    rows = coords[None, None, :, None]
    cols = coords[None, None, None, :]
    dist2 = (rows - centres[:, :, 0, None, None]) ** 2 + (
        cols - centres[:, :, 1, None, None]
    ) ** 2
    blobs = amplitudes[:, :, None, None] * np.exp(
        -dist2 / (2 * widths[:, :, None, None] ** 2)
    )
    return torch.from_numpy(blobs.sum(axis=1))


def _as_batch(x: Tensor) -> Tensor:
    return x[None] if x.ndim == 2 else x


def denoise_predict(
    model: nn.Module,
    x_t: Tensor,
    t: int,
    policy: ScalePolicy,
    trace: EntropyTrace | None = None,
) -> Tensor:
    """
    ε̂ for a noisy image (H×W) or batch (B×H×W) at timestep `t`.

    With a trace, one record per attention layer is appended.
    """
    batch = _as_batch(x_t)
    steps = torch.full((batch.shape[0],), t, dtype=torch.int64)

    observer: AttentionObserver | None = None
    if trace is not None:
        sink = trace

        def record(
            layer_id: int, n_tokens: int, entropy: float, fell_back: bool
        ) -> None:
            sink.append(
                EntropyRecord(
                    timestep=t,
                    layer_id=layer_id,
                    n_tokens=n_tokens,
                    policy=policy.name,
                    mean_entropy=entropy,
                    fell_back=fell_back,
                )
            )

        observer = record

    eps_hat: Tensor = model(batch, steps, policy, observer)
    return eps_hat.reshape(x_t.shape)


def _draw_noise(
    x0: Tensor, rng: RngStream, sched: DiffusionSchedule
) -> tuple[Tensor, Tensor]:
    gen = rng.generator()
    t = torch.from_numpy(gen.integers(0, sched.steps, size=x0.shape[0]))
    eps = torch.from_numpy(gen.standard_normal(tuple(x0.shape))).to(x0.dtype)
    return t, eps


def batch_loss(
    model: nn.Module,
    x0: Tensor,
    rng: RngStream,
    sched: DiffusionSchedule,
    policy: ScalePolicy,
) -> Tensor:
    """Mean squared ε-prediction error over every pixel of the batch."""
    if x0.shape[0] == 0:
        raise EmptyBatch("training batch is empty")
    t, eps = _draw_noise(x0, rng, sched)
    x_t = forward_noise(x0, t, eps, sched)
    eps_hat = model(x_t, t, policy)
    return torch.mean((eps - eps_hat) ** 2)


def loss_and_grad(
    model: nn.Module,
    x0: Tensor,
    rng: RngStream,
    sched: DiffusionSchedule,
    policy: ScalePolicy,
) -> tuple[float, dict[str, Tensor]]:
    """
    Loss and its gradient by reverse-mode autodiff.

    Timesteps and noise are drawn from `rng`, so repeated calls with the same
    stream see the same objective. Gradients are also left in `param.grad`.
    """
    model.zero_grad(set_to_none=True)
    loss = batch_loss(model, x0, rng, sched, policy)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise NonFiniteLoss(f"loss is {value}")
    loss.backward()

    grads = {}
    for name, param in model.named_parameters():
        grad = param.grad if param.grad is not None else torch.zeros_like(param)
        grads[name] = grad.detach().clone()
    return value, grads


def build_state(config: TrainConfig, rng: RngStream) -> TrainState:
    """Freshly initialised denoiser with T taken from the training resolution."""
    model = EntropyDenoiser(config.arch)
    init_parameters(model, rng)
    train_tokens = config.arch.token_count(config.image_size, config.image_size)
    model.record_train_tokens(train_tokens)
    schedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end)
    return TrainState(model, schedule, train_tokens)


def train(config: TrainConfig, data: DataGenerator, rng: RngStream) -> TrainState:
    """
    Momentum gradient descent on the ε-prediction loss.

    Stream layout: rng.child(0) initialises the parameters; step s draws its
    batch from rng.child(s + 1).child(0) and its noise from
    rng.child(s + 1).child(1).
    """
    state = build_state(config, rng.child(0))
    state.optimizer = torch.optim.SGD(
        state.model.parameters(), lr=config.learning_rate, momentum=config.momentum
    )
    # T is recorded once above; training always runs at N = T
    policy = ScalePolicy.fixed()

    logger.info(
        "Training %d steps at %dx%d (T=%d tokens)",
        config.steps,
        config.image_size,
        config.image_size,
        state.train_tokens,
    )
    for step in range(config.steps):
        step_rng = rng.child(step + 1)
        x0 = data(config.batch_size, step_rng.child(0))
        try:
            loss, _ = loss_and_grad(
                state.model, x0, step_rng.child(1), state.schedule, policy
            )
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(f"step {step}: {exc.detail}", state=state) from exc
        state.optimizer.step()
        state.step = step + 1
        state.loss_history.append(loss)
        if (step + 1) % 100 == 0:
            logger.info("step %d loss %.5f", step + 1, loss)

    return state


def sample(
    state: TrainState,
    height: int,
    width: int,
    policy: ScalePolicy,
    rng: RngStream,
    trace: EntropyTrace | None = None,
) -> tuple[Tensor, EntropyTrace]:
    """
    DDPM ancestral sampling from pure noise with σ_t² = β_t.

    Returns the final H×W image and the entropy trace, which holds one record
    per (timestep, attention layer).
    """
    p = state.arch.patch_size
    if height < p or width < p or height % p or width % p:
        raise IncompatibleResolution(
            f"{height}x{width} is not a multiple of patch size {p}"
        )
    trace = trace if trace is not None else EntropyTrace()
    first = len(trace)
    sched = state.schedule
    gen = rng.generator()

    model = state.model.eval()
    x = torch.from_numpy(gen.standard_normal((height, width))).to(DTYPE)
    with torch.no_grad():
        for t in reversed(range(sched.steps)):
            eps_hat = denoise_predict(model, x, t, policy, trace)
            beta = float(sched.betas[t])
            coef = beta / math.sqrt(1.0 - float(sched.alpha_bars[t]))
            x = (x - coef * eps_hat) / math.sqrt(float(sched.alphas[t]))
            if t > 0:
                z = torch.from_numpy(gen.standard_normal((height, width)))
                x = x + math.sqrt(beta) * z.to(DTYPE)
    fallbacks = sum(r.fell_back for r in trace.records[first:])
    if fallbacks:
        logger.warning(
            "entropy-preserving scale undefined at N=%d, used 1/sqrt(d) in %d records",
            state.arch.token_count(height, width),
            fallbacks,
        )
    return x, trace


def entropy_gaps(reference: EntropyTrace, inferred: EntropyTrace) -> list[float]:
    """|entropy(inferred) − entropy(reference)| per shared (timestep, layer)."""
    ref = reference.by_key()
    return [
        abs(r.mean_entropy - ref[(r.timestep, r.layer_id)])
        for r in inferred.records
        if (r.timestep, r.layer_id) in ref
    ]


def gap_reduction_share(
    reference: EntropyTrace, fixed: EntropyTrace, scaled: EntropyTrace
) -> float:
    """Share of records where the scaled policy's gap is no larger than Fixed's."""
    fixed_gaps = entropy_gaps(reference, fixed)
    scaled_gaps = entropy_gaps(reference, scaled)
    if len(fixed_gaps) != len(scaled_gaps) or not fixed_gaps:
        raise ShapeMismatch("traces do not cover the same (timestep, layer) pairs")
    wins = sum(s <= f for s, f in zip(scaled_gaps, fixed_gaps))
    return wins / len(fixed_gaps)
