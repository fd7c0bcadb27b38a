"""Deterministic latent inversion and reconstruction.

Each step predicts the clean sample f = (x_t - sqrt(1 - abar_t) * eps) /
sqrt(abar_t) and re-noises it to the neighboring timestep:

    x_{t+1} = sqrt(abar_{t+1}) * f + sqrt(1 - abar_{t+1}) * eps
    x_{t-1} = sqrt(abar_{t-1}) * f + sqrt(1 - abar_{t-1}) * eps

with eps = predictor(x_t, t, y). The stochasticity knob is fixed to zero, so
forward and reverse trajectories are deterministic and (for a well-behaved
predictor) near-inverses of each other. Timesteps run 0..T with x_0 the
clean sample and abar(0) == 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .attention import AttentionRecord


class ScheduleError(ValueError):
    pass


class NonFiniteLatentError(RuntimeError):
    def __init__(self, step: int, direction: str):
        super().__init__(f"non-finite latent at {direction} step {step}")
        self.step = step
        self.direction = direction


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule tables; index i of each array is timestep i+1."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    eta: float = 0.0

    @property
    def t_steps(self) -> int:
        return len(self.beta)

    def abar(self, t: int) -> float:
        """Cumulative alpha at timestep t, with abar(0) == 1."""
        if t < 0 or t > self.t_steps:
            raise ScheduleError(f"timestep {t} outside [0, {self.t_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_schedule(
    t_steps: int, beta_start: float, beta_end: float, spacing: str = "scaled_linear"
) -> NoiseSchedule:
    """Build a schedule with linearly spaced beta, either directly ("linear")
    or in sqrt space ("scaled_linear", the latent-model convention)."""
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if t_steps < 1:
        raise ScheduleError("t_steps must be >= 1")
    if spacing == "linear":
        beta = np.linspace(beta_start, beta_end, t_steps, dtype=np.float64)
    elif spacing == "scaled_linear":
        beta = np.linspace(beta_start**0.5, beta_end**0.5, t_steps, dtype=np.float64) ** 2
    else:
        raise ScheduleError(f"unknown spacing {spacing!r}")
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=np.cumprod(alpha))


def make_subsampled_schedule(
    t_steps: int = 40,
    stride: int = 8,
    base_steps: int = 1000,
    beta_start: float = 0.00085,
    beta_end: float = 0.012,
    spacing: str = "scaled_linear",
) -> NoiseSchedule:
    """Subsample a long base schedule every `stride` steps; the cumulative
    products are taken from the base schedule at the sampled indices."""
    if t_steps * stride > base_steps:
        raise ScheduleError(f"{t_steps} steps at stride {stride} exceed base {base_steps}")
    base = make_schedule(base_steps, beta_start, beta_end, spacing)
    idx = np.arange(t_steps) * stride
    abar = base.alpha_bar[idx]
    prev = np.concatenate(([1.0], abar[:-1]))
    alpha = abar / prev
    return NoiseSchedule(beta=1.0 - alpha, alpha=alpha, alpha_bar=abar)


@dataclass(frozen=True)
class LatentState:
    x: np.ndarray
    t: int


class NoisePredictor(Protocol):
    def __call__(self, x: np.ndarray, t: int, y: str | None) -> np.ndarray: ...


class ZeroPredictor:
    def __call__(self, x, t, y):
        return np.zeros_like(x)


class ScalarLinearPredictor:
    """eps = c * x; the simplest nontrivial deterministic predictor."""

    def __init__(self, c: float = 0.01):
        self.c = c

    def __call__(self, x, t, y):
        return self.c * x


class RandomLinearPredictor:
    """eps = x @ M over the channel axis, M a small fixed seeded matrix."""

    def __init__(self, channels: int, seed: int = 7, scale: float = 0.005):
        rng = np.random.default_rng(seed)
        self.m = scale * rng.standard_normal((channels, channels))

    def __call__(self, x, t, y):
        return x @ self.m


def _clean_estimate(x: np.ndarray, eps: np.ndarray, abar_t: float) -> np.ndarray:
    return (x - np.sqrt(1.0 - abar_t) * eps) / np.sqrt(abar_t)


def invert_step(state: LatentState, predictor: NoisePredictor, schedule: NoiseSchedule,
                y: str | None = None) -> LatentState:
    """One deterministic forward (noising) step t -> t + 1."""
    t = state.t
    if t < 0 or t >= schedule.t_steps:
        raise ScheduleError(f"cannot invert from t={t} with T={schedule.t_steps}")
    eps = predictor(state.x, t, y)
    f = _clean_estimate(state.x, eps, schedule.abar(t))
    abar_next = schedule.abar(t + 1)
    x_next = np.sqrt(abar_next) * f + np.sqrt(1.0 - abar_next) * eps
    return LatentState(x=x_next, t=t + 1)


def denoise_step(state: LatentState, predictor: NoisePredictor, schedule: NoiseSchedule,
                 y: str | None = None) -> LatentState:
    """One deterministic reverse (denoising) step t -> t - 1."""
    t = state.t
    if t < 1 or t > schedule.t_steps:
        raise ScheduleError(f"cannot denoise from t={t} with T={schedule.t_steps}")
    eps = predictor(state.x, t, y)
    f = _clean_estimate(state.x, eps, schedule.abar(t))
    abar_prev = schedule.abar(t - 1)
    x_prev = np.sqrt(abar_prev) * f + np.sqrt(1.0 - abar_prev) * eps
    return LatentState(x=x_prev, t=t - 1)


# Optional hook: a predictor with a `capture` method also reports per-layer
# attention/features for the step, as (cross, self_attn, features) triples.
CaptureFn = Callable[[np.ndarray, int, str | None], list[tuple[np.ndarray, np.ndarray, np.ndarray]]]


class CapturingPredictor:
    """Wrap a predictor with a deterministic per-layer capture hook.

    Cross maps are the channel mean magnitude of the latent resampled to each
    layer resolution (shifted to be nonnegative), self matrices are uniform
    rows, features are the resampled latent. Enough structure to exercise
    record plumbing end to end.
    """

    def __init__(self, base: NoisePredictor, resolutions: tuple[int, ...] = (8, 16)):
        self.base = base
        self.resolutions = resolutions

    def __call__(self, x, t, y):
        return self.base(x, t, y)

    def capture(self, x, t, y):
        from ._resize import resize2d, resize_hwc

        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        plane = np.abs(x).mean(axis=2)
        layers = []
        for rho in self.resolutions:
            cross = np.abs(resize2d(plane, rho, rho))
            n = rho * rho
            sa = np.full((n, n), 1.0 / n)
            feats = resize_hwc(x, rho, rho)
            layers.append((cross, sa, feats))
        return layers


def invert_and_collect(
    x0: np.ndarray,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    y: str | None = None,
) -> tuple[np.ndarray, np.ndarray, list[AttentionRecord]]:
    """Invert x0 to x_T, then denoise back, collecting per-step records.

    Returns (x_T, reconstruction, records). Records are taken during the
    reverse pass when the predictor exposes `capture`, labeled t = T-1 .. 0,
    one per layer. Raises NonFiniteLatentError with the offending step index
    if a trajectory diverges.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.isfinite(x0).all():
        raise NonFiniteLatentError(0, "forward")
    state = LatentState(x=x0, t=0)
    for _ in range(schedule.t_steps):
        state = invert_step(state, predictor, schedule, y)
        if not np.isfinite(state.x).all():
            raise NonFiniteLatentError(state.t, "forward")
    x_t = state.x
    capture = getattr(predictor, "capture", None)
    records: list[AttentionRecord] = []
    for _ in range(schedule.t_steps):
        if capture is not None:
            for layer_idx, (cross, sa, feats) in enumerate(capture(state.x, state.t, y), start=1):
                records.append(AttentionRecord(
                    t=state.t - 1, l=layer_idx, cross=cross, self_attn=sa, features=feats,
                ))
        state = denoise_step(state, predictor, schedule, y)
        if not np.isfinite(state.x).all():
            raise NonFiniteLatentError(state.t, "reverse")
    return x_t, state.x, records
