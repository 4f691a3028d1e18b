"""Rasterization of truss designs to 76x76 grayscale images, signed heatmaps,
and the image-processing primitives used by move inference.

Conventions
-----------
* Images are float32 arrays of shape (76, 76), values in [0, 1], row 0 at the
  top.  Signed images (heatmaps) are float32 in [-1, 1]: positive means "add
  material", negative means "remove material".
* Pixel (r, c) samples the continuous point x = c, y_px = r.  Design
  coordinates have y pointing up; ``to_pixel``/``to_design`` convert, centering
  the canvas band vertically in the image.
* Nodes are drawn as filled discs of radius NODE_RADIUS; members as strokes of
  width ``member_width(size)``.  Both use a 1-px anti-aliased edge and compose
  by maximum, so intensities stay in [0, 1] and a super-design is always
  pixelwise >= its sub-design.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .truss import ProblemDef, TrussDesign

log = logging.getLogger(__name__)

IMG_SIZE = 76
NODE_RADIUS = 2.0


def member_width(size: int) -> float:
    """Stroke width in px.  The 2/3 px step per size keeps every size change
    visible through the inference thresholds."""
    return 1.0 + 2.0 * size / 3.0


def to_pixel(problem: ProblemDef, x: float, y: float) -> tuple[float, float]:
    """Design coordinates -> continuous pixel (px, py)."""
    row0 = (IMG_SIZE + problem.canvas.height) / 2.0
    return x, row0 - y


def to_design(problem: ProblemDef, px: float, py: float) -> tuple[float, float]:
    row0 = (IMG_SIZE + problem.canvas.height) / 2.0
    return px, row0 - py


def _paint_disc(img: np.ndarray, cx: float, cy: float, radius: float) -> None:
    r0 = max(int(math.floor(cy - radius - 1)), 0)
    r1 = min(int(math.ceil(cy + radius + 1)) + 1, IMG_SIZE)
    c0 = max(int(math.floor(cx - radius - 1)), 0)
    c1 = min(int(math.ceil(cx + radius + 1)) + 1, IMG_SIZE)
    if r0 >= r1 or c0 >= c1:
        return
    rows = np.arange(r0, r1, dtype=np.float64)[:, None]
    cols = np.arange(c0, c1, dtype=np.float64)[None, :]
    dist = np.hypot(rows - cy, cols - cx)
    cover = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    np.maximum(img[r0:r1, c0:c1], cover.astype(np.float32), out=img[r0:r1, c0:c1])


def _segment_distance(rows: np.ndarray, cols: np.ndarray,
                      p0: tuple[float, float], p1: tuple[float, float]) -> np.ndarray:
    """Distance from grid points (cols, rows) to the segment p0-p1 in px space."""
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return np.hypot(cols - x0, rows - y0)
    t = ((cols - x0) * dx + (rows - y0) * dy) / seg2
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(cols - (x0 + t * dx), rows - (y0 + t * dy))


def _paint_stroke(img: np.ndarray, p0: tuple[float, float], p1: tuple[float, float],
                  width: float) -> None:
    half = width / 2.0
    pad = half + 1.0
    r0 = max(int(math.floor(min(p0[1], p1[1]) - pad)), 0)
    r1 = min(int(math.ceil(max(p0[1], p1[1]) + pad)) + 1, IMG_SIZE)
    c0 = max(int(math.floor(min(p0[0], p1[0]) - pad)), 0)
    c1 = min(int(math.ceil(max(p0[0], p1[0]) + pad)) + 1, IMG_SIZE)
    if r0 >= r1 or c0 >= c1:
        return
    rows = np.arange(r0, r1, dtype=np.float64)[:, None]
    cols = np.arange(c0, c1, dtype=np.float64)[None, :]
    dist = _segment_distance(rows, cols, p0, p1)
    cover = np.clip(half + 0.5 - dist, 0.0, 1.0)
    np.maximum(img[r0:r1, c0:c1], cover.astype(np.float32), out=img[r0:r1, c0:c1])


def rasterize(design: TrussDesign, problem: ProblemDef) -> np.ndarray:
    """Deterministic raster of a design: black background, white nodes and
    members, fixed and free nodes drawn identically."""
    img = np.zeros((IMG_SIZE, IMG_SIZE), dtype=np.float32)
    for key in sorted(design.members):
        a, b = key
        na, nb = design.nodes[a], design.nodes[b]
        _paint_stroke(img, to_pixel(problem, na.x, na.y), to_pixel(problem, nb.x, nb.y),
                      member_width(design.members[key]))
    for nid in sorted(design.nodes):
        node = design.nodes[nid]
        px, py = to_pixel(problem, node.x, node.y)
        _paint_disc(img, px, py, NODE_RADIUS)
    return img


def signed_diff(generated: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Pixelwise generated - current; the suggestion heatmap."""
    if generated.shape != current.shape:
        raise ValueError(f"shape mismatch {generated.shape} vs {current.shape}")
    return (generated.astype(np.float32) - current.astype(np.float32))


def threshold(heat: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Binary (add, delete) masks for |value| strictly above tau."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    return heat > tau, heat < -tau


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """Maximal 8-connected regions of set pixels as (n, 2) arrays of (row, col),
    ordered by each region's (min row, min col)."""
    seen = np.zeros(mask.shape, dtype=bool)
    h, w = mask.shape
    regions = []
    for sr in range(h):
        for sc in range(w):
            if not mask[sr, sc] or seen[sr, sc]:
                continue
            stack = [(sr, sc)]
            seen[sr, sc] = True
            pixels = []
            while stack:
                r, c = stack.pop()
                pixels.append((r, c))
                for nr in range(max(r - 1, 0), min(r + 2, h)):
                    for nc in range(max(c - 1, 0), min(c + 2, w)):
                        if mask[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            stack.append((nr, nc))
            regions.append(np.array(sorted(pixels), dtype=np.intp))
    regions.sort(key=lambda px: (int(px[:, 0].min()), int(px[:, 1].min())))
    return regions


def _check_kernel(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"structuring element size must be odd and >= 1, got {k}")


def dilate(mask: np.ndarray, k: int) -> np.ndarray:
    """Binary dilation by a k x k square (zeros outside the image)."""
    _check_kernel(k)
    if k == 1:
        return mask.copy()
    pad = k // 2
    padded = np.pad(mask, pad, constant_values=False)
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return win.any(axis=(2, 3))


def erode(mask: np.ndarray, k: int) -> np.ndarray:
    """Binary erosion by a k x k square (ones outside the image, so borders do
    not erode; this keeps closing extensive and idempotent)."""
    _check_kernel(k)
    if k == 1:
        return mask.copy()
    pad = k // 2
    padded = np.pad(mask, pad, constant_values=True)
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return win.all(axis=(2, 3))


def closing(mask: np.ndarray, k: int) -> np.ndarray:
    return erode(dilate(mask, k), k)


def weighted_centroid(region: np.ndarray, heat: np.ndarray) -> tuple[float, float]:
    """|heat|-weighted mean pixel position of a region, returned as (x, y).
    Falls back to the unweighted mean when all weights vanish."""
    if len(region) == 0:
        raise ValueError("empty region")
    weights = np.abs(heat[region[:, 0], region[:, 1]]).astype(np.float64)
    total = weights.sum()
    if total == 0.0:
        log.warning("weighted_centroid: zero total weight, using unweighted mean")
        return float(region[:, 1].mean()), float(region[:, 0].mean())
    x = float((region[:, 1] * weights).sum() / total)
    y = float((region[:, 0] * weights).sum() / total)
    return x, y


@dataclass(frozen=True)
class SegmentStats:
    coverage: float        # fraction of corridor pixels that are set / non-zero
    mean_intensity: float  # mean value over the corridor
    count: int             # corridor pixels considered
    length_coverage: float = 0.0  # fraction of judgeable 1-px length bins lit
    lit_bins: int = 0      # distinct lit length bins (a compact blob has few)


def segment_stats(values: np.ndarray, p0: tuple[float, float], p1: tuple[float, float],
                  halfwidth: float, inner: float = 0.0, exclude_radius: float = 0.0,
                  where: np.ndarray | None = None) -> SegmentStats:
    """Statistics over the corridor of pixels within ``halfwidth`` of the
    segment p0-p1 (px coords), optionally outside an ``inner`` band, outside
    discs of ``exclude_radius`` at both endpoints, and restricted to pixels
    where ``where`` is set (used to ignore pixels that cannot change)."""
    if p0 == p1:
        raise ValueError("degenerate segment")
    pad = halfwidth + 1.0
    r0 = max(int(math.floor(min(p0[1], p1[1]) - pad)), 0)
    r1 = min(int(math.ceil(max(p0[1], p1[1]) + pad)) + 1, IMG_SIZE)
    c0 = max(int(math.floor(min(p0[0], p1[0]) - pad)), 0)
    c1 = min(int(math.ceil(max(p0[0], p1[0]) + pad)) + 1, IMG_SIZE)
    if r0 >= r1 or c0 >= c1:
        return SegmentStats(0.0, 0.0, 0)
    rows = np.arange(r0, r1, dtype=np.float64)[:, None]
    cols = np.arange(c0, c1, dtype=np.float64)[None, :]
    dist = _segment_distance(rows, cols, p0, p1)
    select = (dist <= halfwidth) & (dist > inner)
    if exclude_radius > 0.0:
        select &= np.hypot(rows - p0[1], cols - p0[0]) > exclude_radius
        select &= np.hypot(rows - p1[1], cols - p1[0]) > exclude_radius
    if where is not None:
        select &= where[r0:r1, c0:c1]
    n = int(select.sum())
    if n == 0:
        return SegmentStats(0.0, 0.0, 0)
    patch = values[r0:r1, c0:c1][select]
    coverage = float(np.count_nonzero(patch) / n)

    # project corridor pixels onto the segment axis: evidence for a member
    # must run along its length, not sit in one compact clump
    x0, y0 = p0
    dx, dy = p1[0] - x0, p1[1] - y0
    seg2 = dx * dx + dy * dy
    rr, cc = np.nonzero(select)
    t = ((cc + c0 - x0) * dx + (rr + r0 - y0) * dy) / seg2
    bins = np.clip((t * math.hypot(dx, dy)).astype(int), 0, None)
    lit = np.asarray(patch, dtype=bool).reshape(-1)
    avail_bins = set(bins.tolist())
    lit_bins = set(bins[lit].tolist())
    length_coverage = len(lit_bins) / len(avail_bins) if avail_bins else 0.0
    return SegmentStats(coverage, float(patch.astype(np.float64).mean()), n,
                        length_coverage, len(lit_bins))


def _box_mean(a: np.ndarray, k: int) -> np.ndarray:
    """Mean over all k x k windows (valid positions) via an integral image."""
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]
    return s / (k * k)


def ssim(a: np.ndarray, b: np.ndarray, window: int = 7,
         c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """Mean local structural similarity (Wang et al.) with a uniform window.

    Statistics per window: mu = E[x], sigma^2 = E[x^2] - mu^2, cov = E[xy] -
    mu_x mu_y, and ssim = (2 mu_x mu_y + C1)(2 cov + C2) /
    ((mu_x^2 + mu_y^2 + C1)(sigma_x^2 + sigma_y^2 + C2)).  Constants use the
    dynamic range L = 1.  Symmetric in its arguments.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    mu_x = _box_mean(x, window)
    mu_y = _box_mean(y, window)
    var_x = _box_mean(x * x, window) - mu_x * mu_x
    var_y = _box_mean(y * y, window) - mu_y * mu_y
    cov = _box_mean(x * y, window) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def save_pgm(img: np.ndarray, path) -> None:
    """8-bit binary PGM (P5); [0, 1] scales to 0..255 by round(v * 255)."""
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"not a binary PGM: {fields[0]!r}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return (data.reshape(height, width).astype(np.float32) / maxval)


def save_signed_ppm(heat: np.ndarray, path) -> None:
    """False-color PPM of a heatmap: add -> magenta, delete -> green, zero ->
    black (the convention used for visual inspection of suggestions)."""
    pos = np.round(np.clip(heat, 0.0, 1.0) * 255.0).astype(np.uint8)
    neg = np.round(np.clip(-heat, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb = np.stack([pos, neg, pos], axis=-1)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{heat.shape[1]} {heat.shape[0]}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
