"""Training objectives: center-score focal loss, GIoU + L1 box regression,
and the multi-view instance contrastive loss with mask-matrix pooling.

All losses are differentiable tensor expressions; the float conveniences
(`regression_loss` on plain boxes) delegate to the same code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .boxes import BBox
from .tensor import Tensor

SCORE_EPS = 1e-6

CONTRASTIVE_VARIANTS = ("standard", "exclusive")


@dataclass
class LossConfig:
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    focal_beta: float = 4.0      # down-weighting of soft (Gaussian) negatives
    weight_focal: float = 1.0
    weight_giou: float = 2.0
    weight_l1: float = 5.0
    tau: float = 0.07
    # "standard": the positive joins the denominator (bounded, >= 0);
    # "exclusive": denominator is negatives only, which can go negative.
    contrastive_variant: str = "standard"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        for name in ("weight_focal", "weight_giou", "weight_l1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.contrastive_variant not in CONTRASTIVE_VARIANTS:
            raise ValueError(f"unknown contrastive_variant {self.contrastive_variant!r}")


@dataclass
class TargetMaps:
    """Per-cell supervision for one box on the score grid."""

    score: np.ndarray    # (H', W') Gaussian bump, exactly 1 at the center cell
    size: np.ndarray     # (H', W', 2), defined at the center cell
    offset: np.ndarray   # (H', W', 2), defined at the center cell
    pos_mask: np.ndarray  # (H', W') bool, the center cell
    center: tuple[int, int] | None  # (row, col); None for EMPTY boxes


GAUSS_SIGMA_CELLS = 1.0


def encode_gt(b: BBox, grid: tuple[int, int], frame_size: float) -> TargetMaps:
    """Assign a box to the score grid (Gaussian bump + center-cell regression)."""
    gh, gw = grid
    score = np.zeros((gh, gw), dtype=np.float64)
    size = np.zeros((gh, gw, 2), dtype=np.float64)
    offset = np.zeros((gh, gw, 2), dtype=np.float64)
    pos = np.zeros((gh, gw), dtype=bool)
    if b.is_empty:
        return TargetMaps(score, size, offset, pos, None)
    patch = frame_size / gw
    c = min(max(int(b.cx // patch), 0), gw - 1)
    r = min(max(int(b.cy // patch), 0), gh - 1)
    rr, cc = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
    score[:] = np.exp(-((rr - r) ** 2 + (cc - c) ** 2) / (2.0 * GAUSS_SIGMA_CELLS ** 2))
    score[r, c] = 1.0
    size[r, c] = (min(b.w / frame_size, 1.0), min(b.h / frame_size, 1.0))
    offset[r, c] = (np.clip(b.cx / patch - c, 0.0, 1.0 - 1e-9),
                    np.clip(b.cy / patch - r, 0.0, 1.0 - 1e-9))
    pos[r, c] = True
    return TargetMaps(score, size, offset, pos, (r, c))


def focal_loss(score: Tensor, score_target: np.ndarray, cfg: LossConfig) -> Tensor:
    """Center-score focal loss with Gaussian-penalty soft negatives,
    normalized by the positive count (>= 1)."""
    if score.shape != score_target.shape:
        raise T.ShapeError(
            f"focal_loss: score {score.shape} vs target {score_target.shape}")
    t = score_target.astype(np.float64)
    pos = (t >= 1.0)
    neg_w = ((1.0 - t) ** cfg.focal_beta) * ~pos
    p = T.clip(score, SCORE_EPS, 1.0 - SCORE_EPS)
    pos_term = T.pow_(1.0 - p, cfg.focal_gamma) * T.log(p) * (
        -cfg.focal_alpha * pos.astype(score.dtype))
    neg_term = T.pow_(p, cfg.focal_gamma) * T.log(1.0 - p) * (
        -(1.0 - cfg.focal_alpha) * neg_w.astype(score.dtype))
    n_pos = max(int(pos.sum()), 1)
    return T.sum_(pos_term + neg_term) * (1.0 / n_pos)


def _xyxy_t(box: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    cx, cy, w, h = (T.gather(box, np.array([i])) for i in range(4))
    return cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5


def giou_pair(pred: Tensor, gt: Tensor) -> Tensor:
    """Differentiable GIoU of two (4,) cxcywh tensors (w, h > 0)."""
    px1, py1, px2, py2 = _xyxy_t(pred)
    gx1, gy1, gx2, gy2 = _xyxy_t(gt)
    iw = T.relu(T.minimum(px2, gx2) - T.maximum(px1, gx1))
    ih = T.relu(T.minimum(py2, gy2) - T.maximum(py1, gy1))
    inter = iw * ih
    area_p = (px2 - px1) * (py2 - py1)
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = area_p + area_g - inter
    cw = T.maximum(px2, gx2) - T.minimum(px1, gx1)
    ch = T.maximum(py2, gy2) - T.minimum(py1, gy1)
    enclose = cw * ch
    return T.sum_(inter / union - (enclose - union) / enclose)


def box_regression_loss(pred: Tensor, gt, cfg: LossConfig) -> Tensor:
    """weight_giou * (1 - GIoU) + weight_l1 * sum |pred - gt| on normalized
    (cx, cy, w, h) in [0, 1] units."""
    gt_t = gt if isinstance(gt, Tensor) else Tensor(np.asarray(gt, dtype=np.float64))
    l1 = T.sum_(T.abs_(pred - gt_t))
    return (1.0 - giou_pair(pred, gt_t)) * cfg.weight_giou + l1 * cfg.weight_l1


def regression_loss(pred_box: BBox, gt_box: BBox, frame_size: float,
                    cfg: LossConfig) -> tuple[float, bool]:
    """Float convenience over plain boxes; EMPTY ground truth is skipped."""
    if gt_box.is_empty:
        return 0.0, True
    if pred_box.frame != gt_box.frame:
        raise ValueError(f"regression_loss: frames {pred_box.frame!r} vs {gt_box.frame!r}")
    s = 1.0 / frame_size
    pred = Tensor(np.array([pred_box.cx, pred_box.cy, pred_box.w, pred_box.h]) * s)
    gt = np.array([gt_box.cx, gt_box.cy, gt_box.w, gt_box.h]) * s
    return box_regression_loss(pred, gt, cfg).item(), False


# -- instance contrastive loss ---------------------------------------------


@dataclass
class InstanceEmbedding:
    vec: Tensor          # (D,)
    instance_id: object
    view_id: int


def mask_pool(tokens: Tensor, grid: tuple[int, int], patch_size: float,
              b: BBox) -> Tensor:
    """Mean of the (flattened-grid) tokens whose cell center lies inside
    the box; falls back to the box-center cell when none qualifies."""
    gh, gw = grid
    centers_x = (np.arange(gw) + 0.5) * patch_size
    centers_y = (np.arange(gh) + 0.5) * patch_size
    gx, gy = np.meshgrid(centers_x, centers_y)
    x1, y1, x2, y2 = b.xyxy
    mask = (gx >= x1) & (gx <= x2) & (gy >= y1) & (gy <= y2)
    idx = np.flatnonzero(mask.reshape(-1))
    if idx.size == 0:
        c = min(max(int(b.cx // patch_size), 0), gw - 1)
        r = min(max(int(b.cy // patch_size), 0), gh - 1)
        idx = np.array([r * gw + c])
    return T.mean(T.gather(tokens, idx, axis=0), axis=0)


def contrastive_loss(embs: list[InstanceEmbedding],
                     cfg: LossConfig) -> tuple[Tensor, bool]:
    """Multi-view instance discrimination over pooled embeddings.

    Anchors are embeddings whose instance has at least two views; the
    positive is the next view of the same instance (round-robin by
    view_id) and the negatives are every embedding of any other instance.
    Returns (0, True) when there are fewer than two instances or no
    instance has a second view.
    """
    if not embs:
        return Tensor(np.zeros(())), True
    ids = [e.instance_id for e in embs]
    by_inst: dict[object, list[int]] = {}
    for i, e in enumerate(embs):
        by_inst.setdefault(e.instance_id, []).append(i)
    for members in by_inst.values():
        members.sort(key=lambda i: embs[i].view_id)
    anchors = [i for i, e in enumerate(embs) if len(by_inst[e.instance_id]) >= 2]
    if len(by_inst) < 2 or not anchors:
        return Tensor(np.zeros((), dtype=embs[0].vec.dtype)), True

    mat = T.concat([T.reshape(e.vec, (1, e.vec.shape[0])) for e in embs], axis=0)
    norms = T.pow_(T.sum_(mat * mat, axis=1), 0.5)
    if np.any(norms.data < 1e-12):
        raise ValueError("contrastive_loss: zero-norm embedding")
    inv = T.pow_(norms, -1.0)
    k = len(embs)
    outer = T.matmul(T.reshape(inv, (k, 1)), T.reshape(inv, (1, k)))
    sim = T.matmul(mat, T.transpose(mat, (1, 0))) * outer  # cosine similarities

    pos_mask = np.zeros((len(anchors), k))
    den_mask = np.zeros((len(anchors), k))
    for a, i in enumerate(anchors):
        members = by_inst[ids[i]]
        pos = members[(members.index(i) + 1) % len(members)]
        pos_mask[a, pos] = 1.0
        for j in range(k):
            if ids[j] != ids[i]:
                den_mask[a, j] = 1.0
        if cfg.contrastive_variant == "standard":
            den_mask[a, pos] = 1.0

    sim_a = T.gather(sim, np.array(anchors), axis=0)  # (A, K)
    logits = T.exp(sim_a * (1.0 / cfg.tau))
    denom = T.sum_(logits * den_mask.astype(sim.dtype), axis=1)
    pos_sim = T.sum_(sim_a * pos_mask.astype(sim.dtype), axis=1)
    per_anchor = T.log(denom) - pos_sim * (1.0 / cfg.tau)
    return T.mean(per_anchor), False
