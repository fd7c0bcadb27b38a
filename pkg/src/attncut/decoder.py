"""Lightweight trainable segment decoder.

Three per-pixel (1x1 receptive field) layers over channel-concatenated,
upsampled features: linear -> ReLU -> linear -> ReLU -> linear -> sigmoid.
Trained with binary cross-entropy and hand-rolled Adam so every gradient is
checkable against finite differences.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor_io
from ._resize import resize2d, resize_hwc

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class DecoderParams:
    weights: list[np.ndarray]       # [ (c_in, hidden), (hidden, hidden), (hidden, 1) ]
    biases: list[np.ndarray]
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    lr: float = 0.001

    @property
    def c_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[1]

    def copy(self) -> "DecoderParams":
        return DecoderParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            m_w=[m.copy() for m in self.m_w],
            v_w=[v.copy() for v in self.v_w],
            m_b=[m.copy() for m in self.m_b],
            v_b=[v.copy() for v in self.v_b],
            step=self.step,
            lr=self.lr,
        )


@dataclass
class TrainBatch:
    features: np.ndarray    # (B, R, R, C)
    targets: np.ndarray     # (B, R, R) in {0, 1}


def init_decoder(rng_seed: int, c_in: int, hidden: int = 64, lr: float = 0.001) -> DecoderParams:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases/moments."""
    if c_in < 1 or hidden < 1:
        raise ValueError("c_in and hidden must be >= 1")
    rng = np.random.default_rng(rng_seed)
    shapes = [(c_in, hidden), (hidden, hidden), (hidden, 1)]
    weights = []
    for fan_in, fan_out in shapes:
        bound = (1.0 / fan_in) ** 0.5
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    biases = [np.zeros(s[1]) for s in shapes]
    return DecoderParams(
        weights=weights,
        biases=biases,
        m_w=[np.zeros_like(w) for w in weights],
        v_w=[np.zeros_like(w) for w in weights],
        m_b=[np.zeros_like(b) for b in biases],
        v_b=[np.zeros_like(b) for b in biases],
        lr=lr,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: DecoderParams, features: np.ndarray) -> np.ndarray:
    """Per-pixel probabilities in (0, 1); features (..., c_in)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != params.c_in:
        raise ValueError(f"expected {params.c_in} channels, got {x.shape[-1]}")
    lead = x.shape[:-1]
    h = x.reshape(-1, params.c_in)
    h1 = np.maximum(h @ params.weights[0] + params.biases[0], 0.0)
    h2 = np.maximum(h1 @ params.weights[1] + params.biases[1], 0.0)
    z = h2 @ params.weights[2] + params.biases[2]
    return _sigmoid(z).reshape(lead)


def loss_and_grad(params: DecoderParams, batch: TrainBatch) -> tuple[float, dict]:
    """Mean binary cross-entropy and its gradients (reverse accumulation)."""
    x = np.asarray(batch.features, dtype=np.float64).reshape(-1, params.c_in)
    y = np.asarray(batch.targets, dtype=np.float64).reshape(-1, 1)
    n = x.shape[0]

    a1 = x @ params.weights[0] + params.biases[0]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ params.weights[1] + params.biases[1]
    h2 = np.maximum(a2, 0.0)
    z = h2 @ params.weights[2] + params.biases[2]
    p = _sigmoid(z)

    p_safe = np.clip(p, 1e-12, 1.0 - 1e-12)
    loss = float(-(y * np.log(p_safe) + (1.0 - y) * np.log(1.0 - p_safe)).mean())

    dz = (p - y) / n                       # BCE + sigmoid fused gradient
    grads = {
        "w2": h2.T @ dz,
        "b2": dz.sum(axis=0),
    }
    dh2 = dz @ params.weights[2].T
    da2 = dh2 * (a2 > 0)
    grads["w1"] = h1.T @ da2
    grads["b1"] = da2.sum(axis=0)
    dh1 = da2 @ params.weights[1].T
    da1 = dh1 * (a1 > 0)
    grads["w0"] = x.T @ da1
    grads["b0"] = da1.sum(axis=0)
    return loss, grads


def adam_step(params: DecoderParams, grads: dict) -> DecoderParams:
    """One in-place Adam update with bias correction; returns params."""
    params.step += 1
    t = params.step
    corr1 = 1.0 - ADAM_BETA1**t
    corr2 = 1.0 - ADAM_BETA2**t
    for i in range(3):
        for store_m, store_v, target, g in (
            (params.m_w, params.v_w, params.weights, grads[f"w{i}"]),
            (params.m_b, params.v_b, params.biases, grads[f"b{i}"]),
        ):
            store_m[i] = ADAM_BETA1 * store_m[i] + (1.0 - ADAM_BETA1) * g
            store_v[i] = ADAM_BETA2 * store_v[i] + (1.0 - ADAM_BETA2) * g * g
            m_hat = store_m[i] / corr1
            v_hat = store_v[i] / corr2
            target[i] = target[i] - params.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params


def stack_features(per_layer: list[np.ndarray], r: int) -> np.ndarray:
    """Upsample every per-layer feature map to r x r and concatenate channels."""
    return np.concatenate([resize_hwc(f, r, r) for f in per_layer], axis=2)


def train(
    samples: list[tuple[np.ndarray, np.ndarray]],
    epochs: int,
    params: DecoderParams,
    batch_size: int = 10,
    shuffle_seed: int = 0,
) -> tuple[DecoderParams, list[float]]:
    """Mini-batch training over (features (R,R,C), target (R,R)) pairs.

    Batches come from a seeded shuffle each epoch; returns the params and
    the per-epoch mean loss curve.
    """
    if not samples:
        raise ValueError("no training samples")
    rng = np.random.default_rng(shuffle_seed)
    curve: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(samples), batch_size):
            idx = order[start : start + batch_size]
            feats = np.stack([samples[i][0] for i in idx])
            targets = np.stack([samples[i][1] for i in idx])
            loss, grads = loss_and_grad(params, TrainBatch(feats, targets))
            adam_step(params, grads)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
    return params, curve


def predict(params: DecoderParams, features: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Probabilities -> threshold 0.5 (ties to background) -> upsample ->
    binary uint8 {0, 255} mask at target dims."""
    prob = forward(params, features)
    binary = prob > 0.5
    up = resize2d(binary.astype(np.float64), target_dims[0], target_dims[1])
    return ((up > 0.5) * 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Checkpoints: one ATNT tensor per weight/bias/moment plus meta.txt.
# Values are stored as f32, so reloading rounds parameters to f32 precision.
# ---------------------------------------------------------------------------

def save_checkpoint(params: DecoderParams, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for i in range(3):
        tensor_io.write_tensor(params.weights[i], os.path.join(out_dir, f"w{i}"))
        tensor_io.write_tensor(params.biases[i], os.path.join(out_dir, f"b{i}"))
        tensor_io.write_tensor(params.m_w[i], os.path.join(out_dir, f"m_w{i}"))
        tensor_io.write_tensor(params.v_w[i], os.path.join(out_dir, f"v_w{i}"))
        tensor_io.write_tensor(params.m_b[i], os.path.join(out_dir, f"m_b{i}"))
        tensor_io.write_tensor(params.v_b[i], os.path.join(out_dir, f"v_b{i}"))
    with open(os.path.join(out_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"step={params.step}\n")
        fh.write(f"lr={params.lr!r}\n")
        fh.write(f"c_in={params.c_in}\n")
        fh.write(f"hidden={params.hidden}\n")


def load_checkpoint(ckpt_dir: str) -> DecoderParams:
    meta = {}
    with open(os.path.join(ckpt_dir, "meta.txt"), "r", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.strip().split("=", 1)
                meta[k] = v
    load = lambda name: tensor_io.read_tensor(os.path.join(ckpt_dir, name)).astype(np.float64)
    return DecoderParams(
        weights=[load(f"w{i}") for i in range(3)],
        biases=[load(f"b{i}") for i in range(3)],
        m_w=[load(f"m_w{i}") for i in range(3)],
        v_w=[load(f"v_w{i}") for i in range(3)],
        m_b=[load(f"m_b{i}") for i in range(3)],
        v_b=[load(f"v_b{i}") for i in range(3)],
        step=int(meta["step"]),
        lr=float(meta["lr"]),
    )
