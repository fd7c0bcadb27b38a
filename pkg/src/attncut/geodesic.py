"""Geodesic distances over image intensity.

The continuous definition (minimum over paths of the accumulated intensity
gradient along the path) is realized discretely as single-source shortest
paths on the 8-connected pixel grid with edge weight ||I(p) - I(q)||_2.
"""

from __future__ import annotations

import heapq

import numpy as np

NEIGHBORS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))


def geodesic_distance_map(image: np.ndarray, source: tuple[int, int]) -> np.ndarray:
    """Dijkstra distances from one pixel over the 8-connected grid.

    image: (H, W, C) or (H, W) with values in [0, 1]. The metric is symmetric
    (undirected edges) and satisfies the triangle inequality exactly.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, _ = img.shape
    sy, sx = source
    if not (0 <= sy < h and 0 <= sx < w):
        raise ValueError(f"source {source} outside {h}x{w} image")
    dist = np.full((h, w), np.inf, dtype=np.float64)
    dist[sy, sx] = 0.0
    done = np.zeros((h, w), dtype=bool)
    heap = [(0.0, sy, sx)]
    while heap:
        d, y, x = heapq.heappop(heap)
        if done[y, x]:
            continue
        done[y, x] = True
        here = img[y, x]
        for dy, dx in NEIGHBORS_8:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not done[ny, nx]:
                nd = d + float(np.linalg.norm(img[ny, nx] - here))
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    heapq.heappush(heap, (nd, ny, nx))
    return dist


def neighbor_color_distance(image: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Per-offset ||I(p) - I(q)||_2 maps for the four unique 8-neighbor offsets.

    Offsets returned are (0,1), (1,0), (1,1), (1,-1); entry [y, x] is the
    distance between pixel (y, x) and pixel (y+dy, x+dx), with arrays shaped
    to the valid region for each offset.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    out = {}
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        if dx >= 0:
            a = img[: img.shape[0] - dy, : img.shape[1] - dx]
            b = img[dy:, dx:]
        else:
            a = img[: img.shape[0] - dy, -dx:]
            b = img[dy:, : img.shape[1] + dx]
        out[(dy, dx)] = np.linalg.norm(a - b, axis=2)
    return out
