import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attncut.attention import aggregate
from attncut.cut import (
    CutParams,
    EmptyForegroundError,
    EmptySeedSetError,
    ablation_params,
    attention_cut,
    boundary_pixels,
    build_coherence_graph,
    coherence_weight,
    objectness,
    otsu_threshold,
    postprocess,
    refine_map,
    select_boundary_seeds,
)
from attncut.fixtures import generate_fixture


def test_step_map_boundary_is_last_foreground_column():
    a = np.zeros((4, 6))
    a[:, :3] = 1.0
    seeds = select_boundary_seeds(a, tau=0.5, n_seeds=10, rng_seed=1)
    expected = {r * 6 + 2 for r in range(4)}
    assert set(seeds.seeds) == expected


def test_seed_determinism():
    rng = np.random.default_rng(3)
    a = rng.random((8, 8))
    s1 = select_boundary_seeds(a, 0.5, 5, rng_seed=42)
    s2 = select_boundary_seeds(a, 0.5, 5, rng_seed=42)
    assert s1.seeds == s2.seeds


def test_seeds_satisfy_boundary_predicate():
    rng = np.random.default_rng(9)
    for _ in range(5):
        a = rng.random((10, 10))
        tau = otsu_threshold(a)
        seeds = select_boundary_seeds(a, tau, 16, rng_seed=7)
        fg = a > tau
        # brute-force boundary enumeration
        oracle = set()
        for y in range(10):
            for x in range(10):
                if fg[y, x]:
                    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < 10 and 0 <= nx < 10 and not fg[ny, nx]:
                            oracle.add(y * 10 + x)
                            break
        assert set(seeds.seeds) <= oracle
        assert len(seeds.seeds) == min(16, len(oracle))
        assert set(boundary_pixels(fg)) == oracle


def test_empty_foreground_raises():
    with pytest.raises(EmptyForegroundError):
        select_boundary_seeds(np.zeros((4, 4)), 0.5, 4, 0)


def test_refine_uniform_row():
    n = 16
    a_s = np.full((n, n), 1.0 / n)
    r = refine_map(a_s, [5])
    assert np.allclose(r, 1.0 / n)


def test_refine_single_seed_is_column():
    rng = np.random.default_rng(21)
    a_s = rng.random((9, 9))
    a_s = (a_s + a_s.T) / 2
    r = refine_map(a_s, [4])
    assert np.array_equal(r, a_s[:, 4])


def test_refine_matches_double_loop():
    rng = np.random.default_rng(23)
    a_s = rng.random((16, 16))
    a_s = (a_s + a_s.T) / 2
    seeds = [2, 7, 11]
    r = refine_map(a_s, seeds)
    oracle = np.zeros(16)
    for p in range(16):
        for b in seeds:
            oracle[p] += a_s[p, b]
    oracle /= len(seeds)
    assert np.max(np.abs(r - oracle)) < 1e-7


def test_refine_permutation_invariant_and_linear():
    rng = np.random.default_rng(25)
    a_s = rng.random((12, 12))
    seeds = [3, 8, 1]
    assert np.array_equal(refine_map(a_s, seeds), refine_map(a_s, [8, 1, 3]))
    assert np.allclose(refine_map(3.0 * a_s, seeds), 3.0 * refine_map(a_s, seeds), atol=1e-12)
    with pytest.raises(EmptySeedSetError):
        refine_map(a_s, [])


def test_objectness_symmetric_point():
    field = objectness(np.full((1, 1), 0.5), np.zeros((1, 1)), 0.0)
    assert field.cost_fg[0, 0] == pytest.approx(math.log(2), abs=1e-12)
    assert field.cost_bg[0, 0] == pytest.approx(math.log(2), abs=1e-12)


def test_objectness_clamps_at_one():
    field = objectness(np.ones((1, 1)), np.full((1, 1), 0.7), 0.16)
    assert field.s[0, 0] == pytest.approx(1 - 1e-6)
    assert field.cost_fg[0, 0] == pytest.approx(0.0, abs=1e-5)
    assert field.cost_bg[0, 0] == pytest.approx(-math.log(1e-6), rel=1e-6)  # ~13.8


def test_objectness_reference_values():
    # lambda_phi = 0.16, a_c = 0.3, r = 0.5 -> s = 0.38
    field = objectness(np.full((1, 1), 0.3), np.full((1, 1), 0.5), 0.16)
    assert field.s[0, 0] == pytest.approx(0.38, abs=1e-12)
    assert field.cost_fg[0, 0] == pytest.approx(-math.log(0.38), abs=1e-12)
    with pytest.raises(ValueError):
        objectness(np.zeros((2, 2)), np.zeros((3, 3)), 0.1)


def test_coherence_weight_values():
    assert coherence_weight(0.2, 0.0, 2.5) == pytest.approx(2.7, abs=1e-12)
    assert coherence_weight(0.31, 1e9, 2.5) == pytest.approx(0.31, abs=1e-12)
    assert coherence_weight(0.0, 1.0, 2.5) == pytest.approx(2.5 / math.e, abs=1e-12)


@given(
    a1=st.floats(0, 1), a2=st.floats(0, 1),
    d1=st.floats(0, 50), d2=st.floats(0, 50),
)
@settings(max_examples=60, deadline=None)
def test_coherence_weight_monotonicity(a1, a2, d1, d2):
    lo_a, hi_a = min(a1, a2), max(a1, a2)
    lo_d, hi_d = min(d1, d2), max(d1, d2)
    assert coherence_weight(hi_a, lo_d, 2.5) >= coherence_weight(lo_a, lo_d, 2.5)
    assert coherence_weight(lo_a, hi_d, 2.5) <= coherence_weight(lo_a, lo_d, 2.5)


def test_coherence_graph_structure():
    rng = np.random.default_rng(31)
    n = 16
    a_s = rng.random((n, n))
    a_s = (a_s + a_s.T) / 2
    image = rng.random((4, 4, 3))
    graph = build_coherence_graph(a_s, image, (4, 4), lambda_psi=2.5, long_range_k=3)
    p, q, psi = graph.edge_arrays()
    assert (p != q).all()
    pairs = set(zip(np.minimum(p, q).tolist(), np.maximum(p, q).tolist()))
    assert len(pairs) == len(p)  # no duplicate undirected edges
    assert (psi >= 0).all()
    # local count for a 4x4 8-connected grid: 12 + 12 + 9 + 9
    assert len(graph.local_p) == 42
    # long-range edges never touch the 8-neighborhood
    neighbor_pairs = set(zip(np.minimum(graph.local_p, graph.local_q).tolist(),
                             np.maximum(graph.local_p, graph.local_q).tolist()))
    long_pairs = set(zip(graph.long_p.tolist(), graph.long_q.tolist()))
    assert not (long_pairs & neighbor_pairs)


def test_postprocess_clean_blob_unchanged():
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:12, 5:13] = True
    out = postprocess(mask, (16, 16))
    assert np.array_equal(out > 127, mask)


def test_postprocess_removes_far_speckle():
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:12, 4:12] = True
    mask[15, 0] = True
    out = postprocess(mask, (16, 16)) > 127
    assert not out[15, 0]
    assert out[6, 6]


def test_postprocess_fills_hole():
    mask = np.zeros((16, 16), dtype=bool)
    mask[3:13, 3:13] = True
    mask[7, 7] = False
    mask[7, 8] = False
    out = postprocess(mask, (16, 16)) > 127
    assert out[7, 7] and out[7, 8]


def test_postprocess_empty_passthrough():
    out = postprocess(np.zeros((8, 8), dtype=bool), (16, 16))
    assert not (out > 0).any()


def _scene_and_agg(seed=2024):
    scene = generate_fixture(seed)
    agg = aggregate(scene.records, k=2, r=64, r_s=32)
    return scene, agg


def test_attention_cut_fixture_quality():
    scene, agg = _scene_and_agg()
    result = attention_cut(agg, scene.image, CutParams(r_s=32))
    gt = scene.gt_mask > 127
    pred = result.mask > 127
    iou = (pred & gt).sum() / (pred | gt).sum()
    assert iou >= 0.8
    assert result.flow == pytest.approx(result.energy, abs=1e-9)


def test_attention_cut_deterministic():
    scene, agg = _scene_and_agg()
    r1 = attention_cut(agg, scene.image, CutParams(r_s=32))
    r2 = attention_cut(agg, scene.image, CutParams(r_s=32))
    assert np.array_equal(r1.mask, r2.mask)
    assert r1.energy == r2.energy


def test_attention_cut_constant_map_is_empty_with_flag():
    scene, agg = _scene_and_agg()
    agg.a_c = np.zeros_like(agg.a_c)  # constant map normalizes to zeros
    result = attention_cut(agg, scene.image, CutParams(r_s=32))
    assert result.empty_foreground
    assert not (result.mask > 0).any()


def test_ablation_params_presets():
    base = CutParams(r_s=32)
    v1 = ablation_params(base, "unary_cross")
    assert not v1.use_refine and v1.lam == 0.0
    v6 = ablation_params(base, "full")
    assert v6.use_semantic and v6.use_geodesic and v6.use_refine
    with pytest.raises(ValueError):
        ablation_params(base, "nope")


def test_otsu_bimodal():
    rng = np.random.default_rng(5)
    values = np.concatenate([
        rng.normal(0.2, 0.03, size=500),
        rng.normal(0.8, 0.03, size=500),
    ]).clip(0, 1).reshape(20, 50)
    tau = otsu_threshold(values)
    assert 0.25 < tau < 0.75
    # the threshold separates the two modes almost perfectly
    labels = values > tau
    truth = np.concatenate([np.zeros(500, bool), np.ones(500, bool)]).reshape(20, 50)
    assert (labels == truth).mean() > 0.99
