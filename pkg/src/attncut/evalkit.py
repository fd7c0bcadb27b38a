"""Quantitative evaluation: saliency metrics, localization, shape statistics."""

from __future__ import annotations


from dataclasses import dataclass

import numpy as np

from .components import largest_component

F_BETA2 = 0.3


@dataclass(frozen=True)
class Box:
    """Inclusive pixel coordinates."""

    x0: int
    y0: int
    x1: int
    y1: int

    def area(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)


def _as_bool(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    return m > 127 if m.dtype == np.uint8 else m.astype(bool)


def saliency_metrics(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """(pixel accuracy, foreground IoU); IoU of two empty foregrounds is 1."""
    p = _as_bool(pred)
    g = _as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    acc = float((p == g).mean())
    union = int((p | g).sum())
    if union == 0:
        return acc, 1.0
    return acc, float((p & g).sum() / union)


def f_beta(pred: np.ndarray, gt: np.ndarray, beta2: float = F_BETA2) -> float:
    """F-measure with weighted precision; 0/0 resolves to 0 unless both the
    prediction and the ground truth are empty (then 1)."""
    p = _as_bool(pred)
    g = _as_bool(gt)
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    if tp == 0:
        return 1.0 if (fp == 0 and fn == 0) else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall)


def max_f_beta(
    preds: list[np.ndarray], gts: list[np.ndarray], beta2: float = F_BETA2
) -> tuple[float, float]:
    """Sweep one unified threshold i/255 over all soft maps; at each
    threshold average the per-image F-beta, and return (max, threshold)."""
    if not preds or len(preds) != len(gts):
        raise ValueError("need equally many predictions and ground truths")
    thresholds = np.arange(256) / 255.0
    sums = np.zeros(256, dtype=np.float64)
    for soft, gt in zip(preds, gts):
        soft = np.asarray(soft, dtype=np.float64)
        for i, th in enumerate(thresholds):
            sums[i] += f_beta(soft > th, gt, beta2)
    means = sums / len(preds)
    best = int(np.argmax(means))
    return float(means[best]), float(thresholds[best])


def mask_to_bbox(mask: np.ndarray) -> Box | None:
    """Tight box of the largest 8-connected component; None if mask empty."""
    comp = largest_component(_as_bool(mask), connectivity=8)
    if comp is None:
        return None
    ys, xs = np.nonzero(comp)
    return Box(x0=int(xs.min()), y0=int(ys.min()), x1=int(xs.max()), y1=int(ys.max()))


def box_iou(a: Box, b: Box) -> float:
    ix0, iy0 = max(a.x0, b.x0), max(a.y0, b.y0)
    ix1, iy1 = min(a.x1, b.x1), min(a.y1, b.y1)
    iw, ih = ix1 - ix0 + 1, iy1 - iy0 + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


def corloc(pred_boxes: list[Box | None], gt_box_lists: list[list[Box]]) -> float:
    """Fraction of images whose predicted box overlaps some ground-truth box
    with IoU strictly above 0.5. A missing prediction counts incorrect."""
    if not pred_boxes or len(pred_boxes) != len(gt_box_lists):
        raise ValueError("need equally many predictions and ground-truth lists")
    correct = 0
    for pred, gts in zip(pred_boxes, gt_box_lists):
        if pred is None:
            continue
        if any(box_iou(pred, gt) > 0.5 for gt in gts):
            correct += 1
    return correct / len(pred_boxes)


# ---------------------------------------------------------------------------
# Contours and polygon geometry
# ---------------------------------------------------------------------------

# clockwise Moore neighborhood starting west, (dy, dx)
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))


def trace_contour(comp: np.ndarray) -> np.ndarray:
    """Outer contour of one connected component by Moore-neighbor tracing.

    Returns (N, 2) points as (x, y) pixel coordinates, ordered along the
    boundary. comp must contain at least one pixel.
    """
    comp = np.asarray(comp, dtype=bool)
    h, w = comp.shape
    ys, xs = np.nonzero(comp)
    if ys.size == 0:
        raise ValueError("empty component")
    start = (int(ys[0]), int(xs[0]))  # topmost, then leftmost (row-major scan)

    def fg(y: int, x: int) -> bool:
        return 0 <= y < h and 0 <= x < w and comp[y, x]

    contour = [start]
    back_dir = 0  # index into _MOORE pointing at the backtrack (background) cell
    cur = start
    first_state = None
    while True:
        nxt = None
        for step in range(1, 9):
            d = (back_dir + step) % 8
            ny, nx = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if fg(ny, nx):
                # backtrack for the new pixel: the cell examined just before d,
                # expressed as a direction from the new pixel
                by, bx = cur[0] + _MOORE[(d - 1) % 8][0], cur[1] + _MOORE[(d - 1) % 8][1]
                new_back = _MOORE.index((by - ny, bx - nx))
                nxt = ((ny, nx), new_back)
                break
        if nxt is None:
            break  # isolated pixel
        if first_state is None:
            first_state = nxt
        elif nxt == first_state:
            break
        cur, back_dir = nxt
        contour.append(cur)
    # drop the duplicated closing point if the trace re-entered the start
    if len(contour) > 1 and contour[-1] == contour[0]:
        contour.pop()
    return np.array([(x, y) for (y, x) in contour], dtype=np.float64)


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def douglas_peucker(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Open polyline simplification; every removed point stays within
    tolerance of the simplified chain (point-to-segment distance)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) <= 2:
        return pts.copy()
    dists = _point_segment_distance(pts[1:-1], pts[0], pts[-1])
    imax = int(np.argmax(dists))
    if dists[imax] <= tolerance:
        return np.array([pts[0], pts[-1]])
    split = imax + 1
    left = douglas_peucker(pts[: split + 1], tolerance)
    right = douglas_peucker(pts[split:], tolerance)
    return np.concatenate([left[:-1], right])


def simplify_closed(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Simplify a closed ring: split at the vertex farthest from the first
    point, simplify both halves, and rejoin (closing edge implied)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) <= 3:
        return pts.copy()
    far = int(np.argmax(np.linalg.norm(pts - pts[0], axis=1)))
    if far == 0:
        return pts[:1].copy()
    first = douglas_peucker(pts[: far + 1], tolerance)
    second = douglas_peucker(np.concatenate([pts[far:], pts[:1]]), tolerance)
    return np.concatenate([first[:-1], second[:-1]])


@dataclass(frozen=True)
class PolygonStats:
    sc: int                 # vertex count after simplification
    pl: float               # closed perimeter in unit-square coordinates
    polygon: np.ndarray     # (sc, 2) normalized vertices


def polygon_stats(mask: np.ndarray, tolerance: float = 0.01) -> PolygonStats | None:
    """Shape complexity and perimeter of the largest component's contour.

    The contour is normalized per axis onto the unit square, then simplified.
    Degenerate components (single pixel, or zero extent along an axis) cannot
    be normalized and yield None, which callers should skip.
    """
    comp = largest_component(_as_bool(mask), connectivity=8)
    if comp is None:
        raise ValueError("empty mask has no contour")
    contour = trace_contour(comp)
    pmin = contour.min(axis=0)
    pmax = contour.max(axis=0)
    if (pmax - pmin).min() <= 0:
        return None
    normalized = (contour - pmin) / (pmax - pmin)
    poly = simplify_closed(normalized, tolerance)
    if len(poly) < 3:
        return None
    closed = np.concatenate([poly, poly[:1]])
    pl = float(np.linalg.norm(np.diff(closed, axis=0), axis=1).sum())
    return PolygonStats(sc=len(poly), pl=pl, polygon=poly)


def chamfer_distance(s1: np.ndarray, s2: np.ndarray) -> float:
    """Symmetric squared-distance Chamfer measure between two point sets."""
    a = np.asarray(s1, dtype=np.float64)
    b = np.asarray(s2, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("point sets must be nonempty (N, 2) arrays")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum() + d2.min(axis=0).sum())


def shape_diversity(polygons: list[np.ndarray]) -> float:
    """Mean pairwise Chamfer distance over all unordered polygon pairs."""
    if len(polygons) < 2:
        raise ValueError("shape diversity needs at least two polygons")
    total = 0.0
    count = 0
    for i in range(len(polygons)):
        for j in range(i + 1, len(polygons)):
            total += chamfer_distance(polygons[i], polygons[j])
            count += 1
    return total / count


# ---------------------------------------------------------------------------
# Per-image dataset statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageStats:
    size: float                     # foreground fraction
    cx: float                       # bbox center, normalized to [0, 1]
    cy: float
    contrast: float                 # fg/bg chi-square histogram distance
    sc: int | None
    pl: float | None


def color_contrast(image: np.ndarray, mask: np.ndarray, bins: int = 16) -> float:
    """Chi-square distance between foreground and background RGB histograms
    (bins per channel, concatenated, each normalized to sum 1)."""
    img = np.asarray(image, dtype=np.float64)
    m = _as_bool(mask)
    fg = img[m]
    bg = img[~m]
    if fg.size == 0 or bg.size == 0:
        return 0.0

    def hist(pixels: np.ndarray) -> np.ndarray:
        parts = [np.histogram(pixels[:, c], bins=bins, range=(0.0, 1.0))[0] for c in range(3)]
        h = np.concatenate(parts).astype(np.float64)
        return h / h.sum()

    h1, h2 = hist(fg), hist(bg)
    denom = h1 + h2
    nz = denom > 0
    return float(0.5 * ((h1[nz] - h2[nz]) ** 2 / denom[nz]).sum())


def image_stats(image: np.ndarray, mask: np.ndarray) -> ImageStats:
    m = _as_bool(mask)
    h, w = m.shape
    size = float(m.mean())
    box = mask_to_bbox(m)
    if box is None:
        cx = cy = float("nan")
    else:
        cx = (box.x0 + box.x1 + 1) / 2.0 / w
        cy = (box.y0 + box.y1 + 1) / 2.0 / h
    contrast = color_contrast(image, m)
    if m.any():
        poly = polygon_stats(m)
    else:
        poly = None
    return ImageStats(
        size=size,
        cx=cx,
        cy=cy,
        contrast=contrast,
        sc=poly.sc if poly else None,
        pl=poly.pl if poly else None,
    )
