"""Energy-minimization mask extraction from aggregated attention.

Pipeline: sample seeds on the boundary of the thresholded cross-attention
map, expand them through self-attention into a refined map, combine into
per-pixel objectness costs, build a coherence graph (semantic affinity plus
a geodesic intensity term), and take the minimum cut of the resulting
source/sink grid graph. The mask is cleaned up and resampled to the target
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._resize import minmax_normalize, resize2d, resize_hwc
from .attention import AggregatedAttention
from .components import drop_small_components, fill_holes, morph_close, morph_open
from .geodesic import NEIGHBORS_4, neighbor_color_distance
from .maxflow import FlowNetwork
from .rng import Xorshift64

EPS = 1e-6


class EmptyForegroundError(ValueError):
    """Thresholded cross-attention has no foreground pixels."""


class EmptySeedSetError(ValueError):
    pass


@dataclass(frozen=True)
class CutParams:
    tau_mode: str = "otsu"          # "otsu" or "fixed"
    tau: float = 0.5                # used when tau_mode == "fixed"
    n_seeds: int = 32
    rng_seed: int = 0
    lambda_phi: float = 0.16
    lambda_psi: float = 2.5
    lam: float = 0.1
    long_range_k: int = 8
    r_s: int = 64
    # ablation switches: refined map in the unary, semantic / geodesic
    # contributions in the pairwise term
    use_refine: bool = True
    use_semantic: bool = True
    use_geodesic: bool = True


@dataclass(frozen=True)
class SeedSet:
    tau: float
    seeds: tuple[int, ...]          # flat indices into the r_s x r_s grid
    rng_seed: int


@dataclass
class ObjectnessField:
    s: np.ndarray                   # (r_s, r_s) in (0, 1)
    cost_fg: np.ndarray
    cost_bg: np.ndarray
    lambda_phi: float


@dataclass
class CoherenceGraph:
    dims: tuple[int, int]
    local_p: np.ndarray             # flat index arrays, one entry per edge
    local_q: np.ndarray
    local_psi: np.ndarray
    long_p: np.ndarray
    long_q: np.ndarray
    long_psi: np.ndarray
    lambda_psi: float

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = np.concatenate([self.local_p, self.long_p])
        q = np.concatenate([self.local_q, self.long_q])
        psi = np.concatenate([self.local_psi, self.long_psi])
        return p, q, psi


@dataclass
class CutResult:
    mask: np.ndarray                # uint8 {0, 255} at target dims
    mask_rs: np.ndarray             # bool at (r_s, r_s), before post-processing
    energy: float
    flow: float
    soft: np.ndarray                # objectness s at (r_s, r_s)
    empty_foreground: bool = False
    seeds: SeedSet | None = None


def otsu_threshold(a: np.ndarray, bins: int = 256) -> float:
    """Otsu's threshold on values assumed to lie in [0, 1]."""
    hist, edges = np.histogram(np.asarray(a, dtype=np.float64).ravel(), bins=bins, range=(0.0, 1.0))
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight = hist / total
    cum_w = np.cumsum(weight)
    cum_mu = np.cumsum(weight * centers)
    mu_total = cum_mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * cum_w - cum_mu) ** 2 / (cum_w * (1.0 - cum_w))
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def boundary_pixels(fg: np.ndarray) -> np.ndarray:
    """Flat indices of foreground pixels with an in-bounds 4-neighbor outside."""
    fg = np.asarray(fg, dtype=bool)
    h, w = fg.shape
    on_boundary = np.zeros_like(fg)
    for dy, dx in NEIGHBORS_4:
        shifted = np.zeros_like(fg)
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        xd = slice(max(-dx, 0), w + min(-dx, 0))
        shifted[yd, xd] = ~fg[ys, xs]
        on_boundary |= fg & shifted
    return np.flatnonzero(on_boundary)


def select_boundary_seeds(a_c: np.ndarray, tau: float, n_seeds: int, rng_seed: int) -> SeedSet:
    """Sample up to n_seeds boundary pixels of [a_c > tau] without replacement.

    Deterministic for a fixed rng_seed (seeded xorshift Fisher-Yates).
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    fg = np.asarray(a_c, dtype=np.float64) > tau
    if not fg.any():
        raise EmptyForegroundError(f"no pixels above tau={tau}")
    candidates = boundary_pixels(fg)
    rng = Xorshift64(rng_seed)
    chosen = rng.sample_without_replacement([int(i) for i in candidates], n_seeds)
    return SeedSet(tau=tau, seeds=tuple(sorted(chosen)), rng_seed=rng_seed)


def refine_map(a_s: np.ndarray, seeds: tuple[int, ...] | list[int]) -> np.ndarray:
    """Mean self-attention between every pixel and the seed set.

    a_s is an (N, N) symmetric matrix; the result is a flat length-N map.
    Seeds are averaged in sorted order so the result is exactly invariant
    under seed permutation.
    """
    if len(seeds) == 0:
        raise EmptySeedSetError("refine_map needs at least one seed")
    a_s = np.asarray(a_s, dtype=np.float64)
    cols = sorted(int(b) for b in seeds)
    return a_s[:, cols].mean(axis=1)


def objectness(a_c: np.ndarray, r: np.ndarray, lambda_phi: float) -> ObjectnessField:
    """Combine cross-attention and the refined map into unary cut costs.

    s = clamp(a_c + lambda_phi * r, EPS, 1 - EPS);
    cost_fg = -log(s), cost_bg = -log(1 - s).
    """
    a_c = np.asarray(a_c, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if a_c.shape != r.shape:
        raise ValueError(f"shape mismatch: a_c {a_c.shape} vs r {r.shape}")
    if lambda_phi < 0:
        raise ValueError("lambda_phi must be >= 0")
    s = np.clip(a_c + lambda_phi * r, EPS, 1.0 - EPS)
    return ObjectnessField(
        s=s,
        cost_fg=-np.log(s),
        cost_bg=-np.log(1.0 - s),
        lambda_phi=lambda_phi,
    )


def coherence_weight(a_s_pq: float, d: float, lambda_psi: float) -> float:
    """Pairwise coherence: semantic affinity plus decayed geodesic distance."""
    return float(a_s_pq) + lambda_psi * float(np.exp(-d))


def build_coherence_graph(
    a_s: np.ndarray,
    image_rs: np.ndarray | None,
    dims: tuple[int, int],
    lambda_psi: float,
    long_range_k: int = 8,
    use_semantic: bool = True,
    use_geodesic: bool = True,
) -> CoherenceGraph:
    """8-neighbor local edges carrying the full coherence weight plus
    per-node top-K long-range self-attention edges (semantic term only).

    For neighboring pixels the geodesic distance reduces to the single edge
    weight ||I(p) - I(q)||; long-range edges omit the geodesic term.
    """
    h, w = dims
    n = h * w
    a_s = np.asarray(a_s, dtype=np.float64)
    if a_s.shape != (n, n):
        raise ValueError(f"a_s shape {a_s.shape} does not match grid {dims}")

    if use_geodesic:
        if image_rs is None:
            raise ValueError("geodesic term requires an image")
        color_d = neighbor_color_distance(resize_hwc(np.asarray(image_rs, np.float64), h, w))
    idx = np.arange(n).reshape(h, w)

    local_p, local_q, local_psi = [], [], []
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        if dx >= 0:
            pp = idx[: h - dy, : w - dx].ravel()
            qq = idx[dy:, dx:].ravel()
        else:
            pp = idx[: h - dy, -dx:].ravel()
            qq = idx[dy:, : w + dx].ravel()
        psi = np.zeros(pp.shape[0], dtype=np.float64)
        if use_semantic:
            psi += a_s[pp, qq]
        if use_geodesic:
            psi += lambda_psi * np.exp(-color_d[(dy, dx)].ravel())
        local_p.append(pp)
        local_q.append(qq)
        local_psi.append(psi)
    local_p = np.concatenate(local_p)
    local_q = np.concatenate(local_q)
    local_psi = np.concatenate(local_psi)

    if use_semantic and long_range_k > 0:
        # exclude self and the 8-neighborhood from long-range candidates
        scores = a_s.copy()
        np.fill_diagonal(scores, -np.inf)
        scores[local_p, local_q] = -np.inf
        scores[local_q, local_p] = -np.inf
        k = min(long_range_k, n - 1)
        top = np.argpartition(-scores, kth=k - 1, axis=1)[:, :k]
        rows = np.repeat(np.arange(n), k)
        cols = top.ravel()
        vals = scores[rows, cols]
        keep = np.isfinite(vals) & (vals > 0)
        pairs = np.stack([np.minimum(rows, cols), np.maximum(rows, cols)], axis=1)[keep]
        uniq, first = np.unique(pairs, axis=0, return_index=True)
        long_p = uniq[:, 0]
        long_q = uniq[:, 1]
        long_psi = a_s[long_p, long_q]
    else:
        long_p = np.empty(0, dtype=np.int64)
        long_q = np.empty(0, dtype=np.int64)
        long_psi = np.empty(0, dtype=np.float64)

    return CoherenceGraph(
        dims=dims,
        local_p=local_p,
        local_q=local_q,
        local_psi=np.maximum(local_psi, 0.0),
        long_p=long_p,
        long_q=long_q,
        long_psi=np.maximum(long_psi, 0.0),
        lambda_psi=lambda_psi,
    )


def labeling_energy(
    labels: np.ndarray, field: ObjectnessField, graph: CoherenceGraph, lam: float
) -> float:
    """Energy of a binary labeling: unary costs plus lam * psi over cut edges."""
    flat = np.asarray(labels, dtype=bool).ravel()
    unary = np.where(flat, field.cost_fg.ravel(), field.cost_bg.ravel()).sum()
    p, q, psi = graph.edge_arrays()
    pairwise = psi[flat[p] != flat[q]].sum() if p.size else 0.0
    return float(unary + lam * pairwise)


def minimize_energy(
    field: ObjectnessField, graph: CoherenceGraph, lam: float
) -> tuple[np.ndarray, float, float]:
    """Minimum-energy binary labeling via max-flow/min-cut.

    Returns (labels bool (h, w), energy, flow value). Source-side pixels are
    foreground; the terminal capacities are cost_bg toward the source and
    cost_fg toward the sink so the cut pays exactly the labeling's cost.
    """
    h, w = field.s.shape
    if graph.dims != (h, w):
        raise ValueError(f"field dims {(h, w)} vs graph dims {graph.dims}")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    n = h * w
    source, sink = n, n + 1
    net = FlowNetwork(n + 2)
    cost_fg = field.cost_fg.ravel()
    cost_bg = field.cost_bg.ravel()
    for p in range(n):
        net.add_edge(source, p, float(cost_bg[p]))
        net.add_edge(p, sink, float(cost_fg[p]))
    if lam > 0:
        pp, qq, psi = graph.edge_arrays()
        for p, q, w_pq in zip(pp.tolist(), qq.tolist(), psi.tolist()):
            cap = lam * w_pq
            if cap > 0:
                net.add_edge(p, q, cap, cap)
    flow = net.max_flow(source, sink)
    labels = net.min_cut_source_side(source)[:n].reshape(h, w)
    energy = labeling_energy(labels, field, graph, lam)
    return labels, energy, flow


def postprocess(mask_rs: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Clean up a low-resolution binary mask and resample to target dims.

    Morphological open then close (3x3, 8-connectivity), hole filling,
    removal of components under 10% of the largest, bilinear upsampling,
    threshold at 0.5. Returns a uint8 {0, 255} image.
    """
    mask = np.asarray(mask_rs, dtype=bool)
    if mask.any():
        mask = morph_close(morph_open(mask))
        mask = fill_holes(mask)
        mask = drop_small_components(mask, min_fraction=0.1)
    th, tw = target_dims
    up = resize2d(mask.astype(np.float64), th, tw)
    return ((up > 0.5) * 255).astype(np.uint8)


def attention_cut(
    agg: AggregatedAttention,
    image: np.ndarray,
    params: CutParams,
    target_dims: tuple[int, int] | None = None,
) -> CutResult:
    """Full mask extraction from aggregated attention; deterministic for a
    fixed params.rng_seed.

    A constant cross-attention map (or one with no pixels above tau) yields
    an all-background mask with the empty_foreground flag set.
    """
    r_s = params.r_s
    if target_dims is None:
        target_dims = (np.asarray(image).shape[0], np.asarray(image).shape[1])

    a_c = agg.a_c
    if a_c.shape != (r_s, r_s):
        a_c = minmax_normalize(resize2d(a_c, r_s, r_s))
    # raw self-attention rows are normalized to sum 1, so individual entries
    # scale like 1/N; rescale to [0, 1] so the refined map and the semantic
    # coherence term act on the same footing as a_c
    a_s = minmax_normalize(agg.a_s)

    empty = CutResult(
        mask=np.zeros(target_dims, dtype=np.uint8),
        mask_rs=np.zeros((r_s, r_s), dtype=bool),
        energy=0.0,
        flow=0.0,
        soft=np.clip(a_c, EPS, 1 - EPS),
        empty_foreground=True,
    )
    if float(a_c.max()) <= 0.0:
        return empty

    tau = otsu_threshold(a_c) if params.tau_mode == "otsu" else params.tau
    try:
        seed_set = select_boundary_seeds(a_c, tau, params.n_seeds, params.rng_seed)
    except EmptyForegroundError:
        return empty

    if params.use_refine and seed_set.seeds:
        r = refine_map(a_s, seed_set.seeds).reshape(r_s, r_s)
        field = objectness(a_c, r, params.lambda_phi)
    else:
        field = objectness(a_c, np.zeros_like(a_c), 0.0)

    graph = build_coherence_graph(
        a_s,
        image,
        (r_s, r_s),
        params.lambda_psi,
        long_range_k=params.long_range_k,
        use_semantic=params.use_semantic,
        use_geodesic=params.use_geodesic,
    )
    labels, energy, flow = minimize_energy(field, graph, params.lam)
    mask = postprocess(labels, target_dims)
    return CutResult(
        mask=mask,
        mask_rs=labels,
        energy=energy,
        flow=flow,
        soft=field.s,
        empty_foreground=False,
        seeds=seed_set,
    )


def ablation_params(base: CutParams, variant: str) -> CutParams:
    """Named parameter presets for the component ablation.

    "unary_cross": cross-attention only (no refined map, no pairwise term);
    "unary_refined_geo": refined unary plus geodesic-only coherence;
    "full": refined unary plus semantic and geodesic coherence.
    """
    if variant == "unary_cross":
        return replace(base, use_refine=False, use_semantic=False, use_geodesic=False, lam=0.0)
    if variant == "unary_refined":
        return replace(base, use_refine=True, use_semantic=False, use_geodesic=False, lam=0.0)
    if variant == "unary_refined_geo":
        return replace(base, use_refine=True, use_semantic=False, use_geodesic=True)
    if variant == "unary_refined_sem":
        return replace(base, use_refine=True, use_semantic=True, use_geodesic=False)
    if variant == "full":
        return replace(base, use_refine=True, use_semantic=True, use_geodesic=True)
    raise ValueError(f"unknown ablation variant {variant!r}")
