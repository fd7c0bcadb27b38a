import numpy as np
import pytest

from attncut.geodesic import NEIGHBORS_8, geodesic_distance_map, neighbor_color_distance


def brute_force_distances(image: np.ndarray, source: tuple[int, int]) -> np.ndarray:
    """Enumerate every simple path on the 8-connected grid (tiny images only)."""
    img = image if image.ndim == 3 else image[:, :, None]
    h, w = img.shape[:2]
    best = np.full((h, w), np.inf)

    def dfs(y, x, dist, visited):
        if dist < best[y, x]:
            best[y, x] = dist
        for dy, dx in NEIGHBORS_8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and (ny, nx) not in visited:
                step = float(np.linalg.norm(img[ny, nx] - img[y, x]))
                dfs(ny, nx, dist + step, visited | {(ny, nx)})

    dfs(source[0], source[1], 0.0, {source})
    return best


def test_constant_image_all_zero():
    img = np.full((5, 5, 3), 0.4)
    d = geodesic_distance_map(img, (2, 2))
    assert np.array_equal(d, np.zeros((5, 5)))


def test_two_pixel_distance():
    img = np.array([[0.0, 1.0]])
    d = geodesic_distance_map(img, (0, 0))
    assert d[0, 0] == 0.0
    assert d[0, 1] == 1.0


def test_bright_barrier_matches_bruteforce():
    img = np.array([
        [0.1, 0.1, 0.1],
        [0.9, 0.9, 0.9],
        [0.1, 0.1, 0.1],
    ])
    d = geodesic_distance_map(img, (0, 0))
    oracle = brute_force_distances(img, (0, 0))
    assert np.array_equal(d, oracle)


def test_random_3x3_matches_bruteforce_exactly():
    rng = np.random.default_rng(31)
    for _ in range(10):
        img = rng.random((3, 3, 3))
        src = (int(rng.integers(3)), int(rng.integers(3)))
        assert np.array_equal(geodesic_distance_map(img, src), brute_force_distances(img, src))


def test_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(37)
    img = rng.random((8, 8, 3))
    points = [(0, 0), (3, 5), (7, 2)]
    maps = {p: geodesic_distance_map(img, p) for p in points}
    for p in points:
        for q in points:
            assert abs(maps[p][q] - maps[q][p]) < 1e-12
    a, b, c = points
    assert maps[a][c] <= maps[a][b] + maps[b][c] + 1e-12


def test_neighbor_color_distance_matches_norm():
    rng = np.random.default_rng(41)
    img = rng.random((4, 5, 3))
    dists = neighbor_color_distance(img)
    approx = lambda v: pytest.approx(v, rel=1e-12)
    assert dists[(0, 1)][1, 2] == approx(float(np.linalg.norm(img[1, 3] - img[1, 2])))
    assert dists[(1, 0)][2, 4] == approx(float(np.linalg.norm(img[3, 4] - img[2, 4])))
    assert dists[(1, 1)][0, 0] == approx(float(np.linalg.norm(img[1, 1] - img[0, 0])))
    assert dists[(1, -1)][0, 0] == approx(float(np.linalg.norm(img[1, 0] - img[0, 1])))
