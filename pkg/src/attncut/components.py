"""Binary mask utilities: connected components, morphology, hole filling."""

from __future__ import annotations

from collections import deque

import numpy as np

from .geodesic import NEIGHBORS_4, NEIGHBORS_8


def label_components(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label the true-regions of a boolean mask; returns (labels, count).

    Labels are 1..count in scan order of each component's first pixel;
    background is 0.
    """
    mask = np.asarray(mask, dtype=bool)
    offsets = NEIGHBORS_8 if connectivity == 8 else NEIGHBORS_4
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    current = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] and labels[y, x] == 0:
                current += 1
                labels[y, x] = current
                queue = deque([(y, x)])
                while queue:
                    cy, cx = queue.popleft()
                    for dy, dx in offsets:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and labels[ny, nx] == 0:
                            labels[ny, nx] = current
                            queue.append((ny, nx))
    return labels, current


def largest_component(mask: np.ndarray, connectivity: int = 8) -> np.ndarray | None:
    """Boolean mask of the largest component, or None for an empty mask.
    Ties break toward the earlier label (scan order)."""
    labels, count = label_components(mask, connectivity)
    if count == 0:
        return None
    areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    best = int(np.argmax(areas)) + 1
    return labels == best


def _dilate(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    out = np.zeros_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out |= padded[1 + dy : 1 + dy + mask.shape[0], 1 + dx : 1 + dx + mask.shape[1]]
    return out


def _erode(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    out = np.ones_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out &= padded[1 + dy : 1 + dy + mask.shape[0], 1 + dx : 1 + dx + mask.shape[1]]
    return out


def morph_open(mask: np.ndarray) -> np.ndarray:
    return _dilate(_erode(np.asarray(mask, dtype=bool)))


def morph_close(mask: np.ndarray) -> np.ndarray:
    return _erode(_dilate(np.asarray(mask, dtype=bool)))


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Set to foreground every background region not touching the border."""
    mask = np.asarray(mask, dtype=bool)
    labels, count = label_components(~mask, connectivity=4)
    if count == 0:
        return mask.copy()
    border = np.zeros(count + 1, dtype=bool)
    border[labels[0, :]] = True
    border[labels[-1, :]] = True
    border[labels[:, 0]] = True
    border[labels[:, -1]] = True
    out = mask.copy()
    for lab in range(1, count + 1):
        if not border[lab]:
            out[labels == lab] = True
    return out


def drop_small_components(mask: np.ndarray, min_fraction: float = 0.1) -> np.ndarray:
    """Remove components with area below min_fraction of the largest one."""
    labels, count = label_components(mask, connectivity=8)
    if count == 0:
        return np.asarray(mask, dtype=bool).copy()
    areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    threshold = min_fraction * areas.max()
    keep = np.flatnonzero(areas >= threshold) + 1
    return np.isin(labels, keep)
