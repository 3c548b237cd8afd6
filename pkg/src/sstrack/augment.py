"""View-generating transforms with exact induced box transforms.

Geometric kinds (scale, shear, large-scale jitter, horizontal flip) move
the box as the axis-aligned hull of its four transformed corners;
photometric kinds (blur, color jitter) leave it untouched.  Output images
keep the input size, with out-of-frame regions filled by the per-channel
image mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .boxes import BBox, transform_box, warp_affine

SCALE_RANGE = (0.5, 2.0)
SHEAR_RANGE = (-0.3, 0.3)
BLUR_SIGMA_RANGE = (0.0, 2.0)
LSJ_RANGE = (0.1, 2.0)

GEOMETRIC_KINDS = ("scale", "shear", "lsj", "hflip")
PHOTOMETRIC_KINDS = ("blur", "color_jitter")
# composition order used by sample_views
KIND_ORDER = ("scale", "shear", "lsj", "blur", "color_jitter", "hflip")


class ViewRejected(RuntimeError):
    """Transform pushed the box fully out of frame; caller should resample."""


@dataclass
class AugSpec:
    kind: str
    params: dict[str, float] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in GEOMETRIC_KINDS + PHOTOMETRIC_KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        p = self.params
        if self.kind == "scale" and not SCALE_RANGE[0] <= p["factor"] <= SCALE_RANGE[1]:
            raise ValueError(f"scale factor {p['factor']} outside {SCALE_RANGE}")
        if self.kind == "shear" and not SHEAR_RANGE[0] <= p["factor"] <= SHEAR_RANGE[1]:
            raise ValueError(f"shear factor {p['factor']} outside {SHEAR_RANGE}")
        if self.kind == "blur":
            if not BLUR_SIGMA_RANGE[0] <= p["sigma"] <= BLUR_SIGMA_RANGE[1]:
                raise ValueError(f"blur sigma {p['sigma']} outside {BLUR_SIGMA_RANGE}")
            if int(p.get("kernel", 1)) % 2 == 0:
                raise ValueError("blur kernel must be odd")
        if self.kind == "lsj" and not LSJ_RANGE[0] <= p["scale"] <= LSJ_RANGE[1]:
            raise ValueError(f"lsj scale {p['scale']} outside {LSJ_RANGE}")


def affine_for(spec: AugSpec, shape: tuple[int, ...]) -> np.ndarray | None:
    """2x3 input->output matrix for geometric kinds, None for photometric."""
    h, w = shape[0], shape[1]
    cx, cy = w / 2.0, h / 2.0
    k = spec.kind
    if k == "scale":
        s = spec.params["factor"]
        return np.array([[s, 0.0, cx * (1 - s)], [0.0, s, cy * (1 - s)]])
    if k == "shear":
        f = spec.params["factor"]
        return np.array([[1.0, f, -f * cy], [0.0, 1.0, 0.0]])
    if k == "lsj":
        s = spec.params["scale"]
        tx = spec.params.get("tx", 0.0)
        ty = spec.params.get("ty", 0.0)
        return np.array([[s, 0.0, cx * (1 - s) + tx], [0.0, s, cy * (1 - s) + ty]])
    if k == "hflip":
        return np.array([[-1.0, 0.0, float(w)], [0.0, 1.0, 0.0]])
    return None


def _blur(img: np.ndarray, sigma: float, kernel: int) -> np.ndarray:
    if sigma <= 0.0 or kernel <= 1:
        return img.copy()
    radius = (kernel - 1) / 2.0
    return gaussian_filter(img, sigma=(sigma, sigma, 0.0), mode="nearest",
                           truncate=radius / sigma)


def apply(img: np.ndarray, b: BBox, spec: AugSpec) -> tuple[np.ndarray, BBox]:
    """Apply one transform; raises ViewRejected if the box leaves the frame."""
    m = affine_for(spec, img.shape)
    if m is None:
        if spec.kind == "blur":
            return _blur(img, spec.params["sigma"], int(spec.params.get("kernel", 0))), b
        gain = spec.params.get("gain", 1.0)
        bias = spec.params.get("bias", 0.0)
        return np.clip(img * gain + bias, 0.0, 1.0).astype(img.dtype), b
    new_b = transform_box(b, m)
    h, w = img.shape[:2]
    x1, y1, x2, y2 = new_b.xyxy
    if x2 <= 0 or y2 <= 0 or x1 >= w or y1 >= h:
        raise ViewRejected(f"{spec.kind} moved box out of the {w}x{h} frame")
    return warp_affine(img, m, (h, w)), new_b


@dataclass
class AugConfig:
    """Toggles and draw ranges for view sampling (the ablation surface)."""

    scale: bool = True
    shear: bool = True
    lsj: bool = True
    blur: bool = True
    hflip: bool = False
    color_jitter: bool = False
    prob: float = 0.5
    scale_range: tuple[float, float] = SCALE_RANGE
    shear_range: tuple[float, float] = SHEAR_RANGE
    lsj_range: tuple[float, float] = LSJ_RANGE
    blur_sigma_range: tuple[float, float] = BLUR_SIGMA_RANGE
    gain_range: tuple[float, float] = (0.8, 1.2)
    bias_range: tuple[float, float] = (-0.1, 0.1)


def sample_spec(kind: str, cfg: AugConfig, rng: np.random.Generator,
                shape: tuple[int, ...]) -> AugSpec:
    if kind == "scale":
        return AugSpec("scale", {"factor": rng.uniform(*cfg.scale_range)})
    if kind == "shear":
        return AugSpec("shear", {"factor": rng.uniform(*cfg.shear_range)})
    if kind == "lsj":
        s = rng.uniform(*cfg.lsj_range)
        slack = abs(1.0 - s) * min(shape[0], shape[1]) / 2.0
        return AugSpec("lsj", {"scale": s,
                               "tx": rng.uniform(-slack, slack),
                               "ty": rng.uniform(-slack, slack)})
    if kind == "blur":
        sigma = rng.uniform(*cfg.blur_sigma_range)
        kernel = 2 * int(math.ceil(2.0 * sigma)) + 1
        return AugSpec("blur", {"sigma": sigma, "kernel": kernel})
    if kind == "color_jitter":
        return AugSpec("color_jitter", {"gain": rng.uniform(*cfg.gain_range),
                                        "bias": rng.uniform(*cfg.bias_range)})
    if kind == "hflip":
        return AugSpec("hflip", {})
    raise ValueError(f"unknown kind {kind!r}")


@dataclass
class View:
    image: np.ndarray
    box: BBox
    specs: tuple[AugSpec, ...]


MAX_RESAMPLES = 10


def sample_views(img: np.ndarray, b: BBox, k: int, rng: np.random.Generator,
                 cfg: AugConfig | None = None) -> list[View]:
    """Draw k independent augmented views; rejected draws are resampled up
    to MAX_RESAMPLES times before falling back to the identity view."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = cfg or AugConfig()
    views = []
    for _ in range(k):
        view = View(img.copy(), b, ())
        for _attempt in range(MAX_RESAMPLES):
            specs = [sample_spec(kind, cfg, rng, img.shape)
                     for kind in KIND_ORDER
                     if getattr(cfg, kind) and rng.random() < cfg.prob]
            try:
                cur_img, cur_b = img, b
                for spec in specs:
                    cur_img, cur_b = apply(cur_img, cur_b, spec)
                if cur_img is img:
                    cur_img = img.copy()
                view = View(cur_img, cur_b, tuple(specs))
                break
            except ViewRejected:
                continue
        views.append(view)
    return views
