"""Aggregation of per-(timestep, layer) attention records.

Cross-attention maps are averaged over the top-k layers (ranked by the
standard deviation of each layer's time-averaged map) and all timesteps,
then min-max normalized. Self-attention is averaged over all layers and
timesteps on a common pixel grid and symmetrized. Intermediate features
are averaged over timesteps per layer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import tensor_io
from ._resize import minmax_normalize, resize2d, resize_pairwise

ROW_SUM_TOL = 1e-4


class AttentionError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionRecord:
    """One (timestep, layer) snapshot: cross map, self matrix, features."""

    t: int
    l: int
    cross: np.ndarray       # (H_l, W_l), nonnegative
    self_attn: np.ndarray   # (N_l, N_l), rows sum to 1, N_l = H_l * W_l
    features: np.ndarray    # (H_l, W_l, C_l)

    def __post_init__(self):
        cross = np.asarray(self.cross, dtype=np.float64)
        sa = np.asarray(self.self_attn, dtype=np.float64)
        feats = np.asarray(self.features, dtype=np.float64)
        if cross.ndim != 2:
            raise AttentionError(f"cross must be 2-D, got {cross.shape}")
        n = cross.shape[0] * cross.shape[1]
        if sa.shape != (n, n):
            raise AttentionError(
                f"self_attn shape {sa.shape} does not match grid {cross.shape}"
            )
        if feats.ndim != 3 or feats.shape[:2] != cross.shape:
            raise AttentionError(
                f"features shape {feats.shape} does not match grid {cross.shape}"
            )
        if cross.min() < 0:
            raise AttentionError("cross-attention must be nonnegative")
        row_sums = sa.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
            worst = float(np.abs(row_sums - 1.0).max())
            raise AttentionError(f"self-attention rows must sum to 1 (off by {worst:.2e})")
        object.__setattr__(self, "cross", cross)
        object.__setattr__(self, "self_attn", sa)
        object.__setattr__(self, "features", feats)

    @property
    def grid(self) -> tuple[int, int]:
        return self.cross.shape


@dataclass
class AggregatedAttention:
    """Time/layer-averaged attention consumed by the cut and the decoder."""

    a_c: np.ndarray            # (R, R) in [0, 1]
    a_s: np.ndarray            # (R_s^2, R_s^2), symmetric
    f: list[np.ndarray]        # per-layer (H_l, W_l, C_l)
    r: int
    r_s: int
    k: int
    n_layers: int
    n_steps: int


def _sorted_records(records: list[AttentionRecord]) -> list[AttentionRecord]:
    return sorted(records, key=lambda rec: (rec.l, rec.t))


def rank_layers_by_std(records: list[AttentionRecord], r: int) -> list[int]:
    """Layer indices ordered by descending std of the time-averaged cross map.

    Maps are resized to the common resolution r before averaging so the
    statistic is comparable across layers. Ties break toward lower layer index.
    """
    by_layer: dict[int, list[np.ndarray]] = {}
    for rec in _sorted_records(records):
        by_layer.setdefault(rec.l, []).append(resize2d(rec.cross, r, r))
    stds = {l: float(np.std(np.mean(maps, axis=0))) for l, maps in by_layer.items()}
    return sorted(stds, key=lambda l: (-stds[l], l))


def aggregate_cross_attention(
    records: list[AttentionRecord], k: int, r: int, normalize: bool = True
) -> np.ndarray:
    """Average the top-k layers (by std of the time-averaged map) over all
    timesteps at resolution r x r, then min-max normalize to [0, 1]."""
    if not records:
        raise AttentionError("no records to aggregate")
    layers = sorted({rec.l for rec in records})
    if k < 1 or k > len(layers):
        raise AttentionError(f"k={k} out of range for {len(layers)} layers")
    selected = set(rank_layers_by_std(records, r)[:k])
    acc = np.zeros((r, r), dtype=np.float64)
    count = 0
    for rec in _sorted_records(records):
        if rec.l in selected:
            acc += resize2d(rec.cross, r, r)
            count += 1
    acc /= count
    return minmax_normalize(acc) if normalize else acc


def aggregate_self_attention(records: list[AttentionRecord], r_s: int) -> np.ndarray:
    """Mean of all self matrices on the common r_s grid, then (A + A.T) / 2."""
    if not records:
        raise AttentionError("no records to aggregate")
    acc = np.zeros((r_s * r_s, r_s * r_s), dtype=np.float64)
    for rec in _sorted_records(records):
        acc += resize_pairwise(rec.self_attn, rec.grid, r_s)
    acc /= len(records)
    return (acc + acc.T) / 2.0


def aggregate_features(records: list[AttentionRecord]) -> list[np.ndarray]:
    """Per-layer timestep mean of features, native resolutions preserved.

    Records must cover every (t, l) pair exactly once for t in [0, T) and
    the set of layers present.
    """
    if not records:
        raise AttentionError("no records to aggregate")
    steps = sorted({rec.t for rec in records})
    layers = sorted({rec.l for rec in records})
    if steps != list(range(len(steps))):
        raise AttentionError(f"timesteps must be 0..T-1, got {steps}")
    seen: dict[tuple[int, int], AttentionRecord] = {}
    for rec in records:
        key = (rec.t, rec.l)
        if key in seen:
            raise AttentionError(f"duplicate record for (t={rec.t}, l={rec.l})")
        seen[key] = rec
    out = []
    for l in layers:
        per_t = []
        for t in steps:
            if (t, l) not in seen:
                raise AttentionError(f"missing record for (t={t}, l={l})")
            per_t.append(seen[(t, l)].features)
        shapes = {f.shape for f in per_t}
        if len(shapes) != 1:
            raise AttentionError(f"layer {l} has inconsistent feature dims {shapes}")
        out.append(np.mean(per_t, axis=0))
    return out


def aggregate(records: list[AttentionRecord], k: int, r: int, r_s: int) -> AggregatedAttention:
    """Run all three aggregations over one bundle's records."""
    return AggregatedAttention(
        a_c=aggregate_cross_attention(records, k, r),
        a_s=aggregate_self_attention(records, r_s),
        f=aggregate_features(records),
        r=r,
        r_s=r_s,
        k=k,
        n_layers=len({rec.l for rec in records}),
        n_steps=len({rec.t for rec in records}),
    )


# ---------------------------------------------------------------------------
# Attention bundle on disk: a directory of ATNT tensors named
# cross_t{t}_l{l}, self_t{t}_l{l}, feat_t{t}_l{l}, plus meta.txt.
# ---------------------------------------------------------------------------

META_NAME = "meta.txt"


def save_bundle(records: list[AttentionRecord], out_dir: str, token_index: int = 0) -> None:
    os.makedirs(out_dir, exist_ok=True)
    steps = sorted({rec.t for rec in records})
    layers = sorted({rec.l for rec in records})
    res = {}
    channels = {}
    for rec in records:
        tensor_io.write_tensor(rec.cross, os.path.join(out_dir, f"cross_t{rec.t}_l{rec.l}"))
        tensor_io.write_tensor(rec.self_attn, os.path.join(out_dir, f"self_t{rec.t}_l{rec.l}"))
        tensor_io.write_tensor(rec.features, os.path.join(out_dir, f"feat_t{rec.t}_l{rec.l}"))
        res[rec.l] = rec.grid
        channels[rec.l] = rec.features.shape[2]
    with open(os.path.join(out_dir, META_NAME), "w", encoding="utf-8") as fh:
        fh.write(f"T={len(steps)}\n")
        fh.write(f"L={len(layers)}\n")
        fh.write(f"token_index={token_index}\n")
        fh.write("layers=" + ",".join(str(l) for l in layers) + "\n")
        fh.write("res=" + ",".join(f"{res[l][0]}x{res[l][1]}" for l in layers) + "\n")
        fh.write("channels=" + ",".join(str(channels[l]) for l in layers) + "\n")


def load_bundle_meta(bundle_dir: str) -> dict[str, str]:
    meta_path = os.path.join(bundle_dir, META_NAME)
    if not os.path.exists(meta_path):
        raise AttentionError(f"bundle {bundle_dir} has no {META_NAME}")
    meta: dict[str, str] = {}
    with open(meta_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                meta[key.strip()] = value.strip()
    return meta


def load_bundle(bundle_dir: str) -> list[AttentionRecord]:
    """Read every (t, l) record of a bundle directory, validating shapes."""
    meta = load_bundle_meta(bundle_dir)
    try:
        n_steps = int(meta["T"])
        layers = [int(x) for x in meta["layers"].split(",")]
    except (KeyError, ValueError) as exc:
        raise AttentionError(f"bundle {bundle_dir} has malformed metadata") from exc
    records = []
    for t in range(n_steps):
        for l in layers:
            try:
                cross = tensor_io.read_tensor(os.path.join(bundle_dir, f"cross_t{t}_l{l}"))
                sa = tensor_io.read_tensor(os.path.join(bundle_dir, f"self_t{t}_l{l}"))
                feats = tensor_io.read_tensor(os.path.join(bundle_dir, f"feat_t{t}_l{l}"))
            except FileNotFoundError as exc:
                raise AttentionError(f"bundle {bundle_dir} missing record t={t} l={l}") from exc
            records.append(AttentionRecord(t=t, l=l, cross=cross, self_attn=sa, features=feats))
    return records
