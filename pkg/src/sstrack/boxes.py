"""Axis-aligned boxes, overlap measures, crop windows and coordinate maps.

Boxes live in continuous pixel coordinates: pixel (row i, col j) covers the
unit square [j, j+1) x [i, i+1), so an integer box x1..x2 spans x2-x1 whole
pixels.  Every box carries a frame tag; mixing frames in a binary op is a
contract violation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GLOBAL_FRAME = "global"


class FrameMismatchError(ValueError):
    """Raised when two boxes from different coordinate frames are combined."""


@dataclass(frozen=True)
class BBox:
    """Center/size box. ``w == h == 0`` is the designated EMPTY value."""

    cx: float
    cy: float
    w: float
    h: float
    frame: str = GLOBAL_FRAME

    @classmethod
    def from_xyxy(cls, x1, y1, x2, y2, frame=GLOBAL_FRAME) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1, frame)

    @classmethod
    def from_ltwh(cls, x, y, w, h, frame=GLOBAL_FRAME) -> "BBox":
        return cls(x + w / 2.0, y + h / 2.0, w, h, frame)

    @classmethod
    def empty(cls, frame=GLOBAL_FRAME) -> "BBox":
        return cls(0.0, 0.0, 0.0, 0.0, frame)

    @property
    def is_empty(self) -> bool:
        return self.w <= 0.0 or self.h <= 0.0

    @property
    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                self.cx + self.w / 2.0, self.cy + self.h / 2.0)

    @property
    def ltwh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)


def _check_frames(op: str, a: BBox, b: BBox):
    if a.frame != b.frame:
        raise FrameMismatchError(f"{op}: boxes in frames {a.frame!r} vs {b.frame!r}")


def _inter_area(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.xyxy
    bx1, by1, bx2, by2 = b.xyxy
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    return max(iw, 0.0) * max(ih, 0.0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; EMPTY operands give 0."""
    _check_frames("iou", a, b)
    if a.is_empty or b.is_empty:
        return 0.0
    inter = _inter_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU in (-1, 1]: IoU minus the enclosing-box slack."""
    _check_frames("giou", a, b)
    if a.is_empty or b.is_empty:
        raise ValueError("giou: EMPTY box operand (mask empties out upstream)")
    inter = _inter_area(a, b)
    union = a.area + b.area - inter
    ax1, ay1, ax2, ay2 = a.xyxy
    bx1, by1, bx2, by2 = b.xyxy
    cw = max(ax2, bx2) - min(ax1, bx1)
    ch = max(ay2, by2) - min(ay1, by1)
    enclose = cw * ch
    return inter / union - (enclose - union) / enclose


# -- crop windows --------------------------------------------------------------


@dataclass(frozen=True)
class CropWindow:
    """Square window in global coordinates, resampled to out_size pixels."""

    cx: float
    cy: float
    side: float
    out_size: int

    @property
    def scale(self) -> float:
        return self.out_size / self.side

    @property
    def x0(self) -> float:
        return self.cx - self.side / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.side / 2.0

    @property
    def frame(self) -> str:
        return f"crop({self.cx!r},{self.cy!r},{self.side!r},{self.out_size})"


MIN_CROP_SIDE = 8.0


def make_crop_window(b: BBox, context_factor: float, out_size: int) -> CropWindow:
    """Square window centered on the box, side = factor * sqrt(w*h), >= 8 px."""
    side = max(context_factor * math.sqrt(b.w * b.h), MIN_CROP_SIDE)
    return CropWindow(b.cx, b.cy, side, int(out_size))


def full_window(frame_shape: tuple[int, ...], out_size: int) -> CropWindow:
    """Window covering the whole frame (max side), centered."""
    h, w = frame_shape[0], frame_shape[1]
    return CropWindow(w / 2.0, h / 2.0, float(max(h, w)), int(out_size))


def global_to_crop(b: BBox, win: CropWindow) -> BBox:
    s = win.scale
    if b.is_empty:
        return BBox.empty(win.frame)
    return BBox((b.cx - win.x0) * s, (b.cy - win.y0) * s, b.w * s, b.h * s, win.frame)


def crop_to_global(b: BBox, win: CropWindow) -> BBox:
    s = win.scale
    if b.is_empty:
        return BBox.empty(GLOBAL_FRAME)
    return BBox(win.x0 + b.cx / s, win.y0 + b.cy / s, b.w / s, b.h / s, GLOBAL_FRAME)


# -- image resampling ----------------------------------------------------------


def channel_mean(img: np.ndarray) -> np.ndarray:
    return img.reshape(-1, img.shape[-1]).mean(axis=0)


def _pad_with_mean(img: np.ndarray, pad_value: np.ndarray | None) -> np.ndarray:
    """One-pixel mean border; together with coordinate clamping this makes
    every out-of-frame sample interpolate toward the per-channel mean."""
    if pad_value is None:
        pad_value = channel_mean(img)
    h, w, c = img.shape
    padded = np.empty((h + 2, w + 2, c), dtype=img.dtype)
    padded[:] = pad_value.astype(img.dtype)
    padded[1:-1, 1:-1] = img
    return padded


def _axis_coords(coords: np.ndarray, n: int):
    """Clamped floor index (into a mean-padded axis) and fractional part."""
    f = np.clip(coords - 0.5, -1.0, float(n))
    i0 = np.minimum(np.floor(f), n - 1.0)
    frac = f - i0
    return i0.astype(np.int64) + 1, frac


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    pad_value: np.ndarray | None = None) -> np.ndarray:
    """Bilinear lookup of an HWC float image at continuous (x, y) positions.

    Positions are in box coordinates (pixel centers at integer + 0.5);
    samples outside the image blend into ``pad_value`` (image mean by
    default).
    """
    h, w = img.shape[:2]
    padded = _pad_with_mean(img, pad_value)
    x0, tx = _axis_coords(np.asarray(xs), w)
    y0, ty = _axis_coords(np.asarray(ys), h)
    tx = tx[..., None].astype(img.dtype)
    ty = ty[..., None].astype(img.dtype)
    flat = padded.reshape(-1, padded.shape[-1])
    base = y0 * (w + 2) + x0
    top = flat[base] * (1.0 - tx) + flat[base + 1] * tx
    base2 = base + (w + 2)
    bot = flat[base2] * (1.0 - tx) + flat[base2 + 1] * tx
    return top * (1.0 - ty) + bot * ty


def crop_image(img: np.ndarray, win: CropWindow) -> np.ndarray:
    """Resample the window to out_size x out_size; outside pixels blend to
    the per-channel mean.  Axis-aligned, so the interpolation separates."""
    out = win.out_size
    s = win.scale
    h, w = img.shape[:2]
    j = np.arange(out, dtype=np.float64) + 0.5
    padded = _pad_with_mean(img, None)
    x0, tx = _axis_coords(win.x0 + j / s, w)
    y0, ty = _axis_coords(win.y0 + j / s, h)
    rows = (padded[y0] * (1.0 - ty[:, None, None]).astype(img.dtype)
            + padded[y0 + 1] * ty[:, None, None].astype(img.dtype))
    txc = tx[None, :, None].astype(img.dtype)
    res = rows[:, x0] * (1.0 - txc) + rows[:, x0 + 1] * txc
    return res.astype(img.dtype, copy=False)


# -- affine transforms (shared with the augmentation module) -------------------


def affine_compose(second: np.ndarray, first: np.ndarray) -> np.ndarray:
    """Matrix applying ``first`` then ``second`` (both 2x3, input -> output)."""
    a = np.vstack([second, [0.0, 0.0, 1.0]])
    b = np.vstack([first, [0.0, 0.0, 1.0]])
    return (a @ b)[:2]


def affine_invert(m: np.ndarray) -> np.ndarray:
    full = np.vstack([m, [0.0, 0.0, 1.0]])
    return np.linalg.inv(full)[:2]


def transform_box(b: BBox, m: np.ndarray) -> BBox:
    """Axis-aligned hull of the box's four corners under the affine map."""
    x1, y1, x2, y2 = b.xyxy
    corners = np.array([[x1, y1], [x2, y1], [x1, y2], [x2, y2]])
    mapped = corners @ m[:, :2].T + m[:, 2]
    nx1, ny1 = mapped.min(axis=0)
    nx2, ny2 = mapped.max(axis=0)
    return BBox.from_xyxy(float(nx1), float(ny1), float(nx2), float(ny2), b.frame)


def warp_affine(img: np.ndarray, m: np.ndarray, out_shape: tuple[int, int],
                pad_value: np.ndarray | None = None) -> np.ndarray:
    """Apply an input->output affine map to an HWC image (bilinear, mean pad)."""
    inv = affine_invert(m)
    oh, ow = out_shape
    j = np.arange(ow, dtype=np.float64) + 0.5
    i = np.arange(oh, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(j, i)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    sy = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    return sample_bilinear(img, sx, sy, pad_value).astype(img.dtype, copy=False)
