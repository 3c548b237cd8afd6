"""Decoupled forward/backward cycle training.

One training step per sequence batch:

1. Forward (global) pass — predict the target's box on each later frame
   of the clip, searching the full (resized) frame, and crop a new
   reference template around every prediction.  No gradients cross the
   predicted-box -> crop-window boundary.
2. Backward (local) pass — augmented views of the initial frame become
   search frames; the references are the forward crops.  The view-
   transformed initial box is the only trusted label, so landing on it
   closes the cycle and yields the tracking loss.
3. Instance embeddings are mask-pooled per view and contrasted across the
   batch (instance = sequence, views = augmentations).

Total loss is tracking + contrastive with unit weights.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .augment import AugConfig, AugSpec, sample_views
from .boxes import (BBox, CropWindow, crop_image, crop_to_global, full_window,
                    global_to_crop, make_crop_window)
from .losses import (InstanceEmbedding, LossConfig, box_regression_loss,
                     contrastive_loss, encode_gt, focal_loss, mask_pool)
from .model import ModelConfig, PredictionMap, SearchView, TrackerModel, decode
from .optim import AdamW
from .synth import SequenceSample, im_to_float
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    n_global_search: int = 3    # forward frames per clip
    m_views: int = 2            # augmented backward search frames
    k_backward_refs: int = 3    # forward crops kept as backward references
    epochs: int = 20
    steps_per_epoch: int = 125
    batch_size: int = 8
    lr_backbone: float = 5e-4
    lr_heads: float = 1e-3
    weight_decay: float = 1e-4
    lr_drop_epoch: int = 16
    lr_drop_factor: float = 0.1
    labeled_fraction: float = 0.0
    forward_loss: bool = True   # tracking loss on forward passes of labeled clips
    use_contrastive: bool = True
    template_factor: float = 2.0
    search_factor: float = 4.0
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    aug: AugConfig = field(default_factory=AugConfig)

    def __post_init__(self):
        if self.n_global_search < 1:
            raise ValueError("n_global_search must be >= 1")
        if self.m_views < 2:
            raise ValueError("m_views must be >= 2 (contrastive loss needs views)")
        if self.k_backward_refs > self.model.max_refs:
            raise ValueError("k_backward_refs exceeds the model's max_refs")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ValueError("labeled_fraction must be in [0, 1]")

    def to_json(self) -> str:
        def enc(obj):
            if dataclasses.is_dataclass(obj):
                return {k: enc(v) for k, v in dataclasses.asdict(obj).items()}
            return obj
        return json.dumps(enc(self), sort_keys=True, indent=2, default=str)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key, sub in (("model", ModelConfig), ("loss", LossConfig), ("aug", AugConfig)):
            if key in d and isinstance(d[key], dict):
                payload = dict(d[key])
                for k, v in payload.items():
                    if isinstance(v, list):
                        payload[k] = tuple(v)
                d[key] = sub(**payload)
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ci_config(**overrides) -> TrainConfig:
    """The smoke-run configuration: 300 steps on the easy tier."""
    base = dict(epochs=6, steps_per_epoch=50, batch_size=8, lr_drop_epoch=5)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class ForwardStep:
    window: CropWindow          # template crop window around the prediction
    box: BBox                   # predicted box, global coordinates
    crop_img: np.ndarray        # template-sized crop around the prediction
    crop_box: BBox              # the prediction in crop coordinates
    pm: PredictionMap | None    # kept only when the pass runs in-graph
    search_window: CropWindow   # the full-frame window the prediction came from
    frame_index: int


@dataclass
class CycleBatchResult:
    forward_boxes: list[list[BBox]]
    backward_boxes: list[list[BBox]]
    loss_track: float
    loss_cont: float
    loss_all: float
    skip_flags: dict


def forward_phase(model, seq: SequenceSample, cfg: TrainConfig,
                  build_graph: bool = False) -> list[ForwardStep]:
    """Global pass over frames 2..n_global_search+1.

    The context starts from the initial (frame, box) template and grows by
    one template crop per prediction (FIFO beyond max_refs, keeping the
    initial entry).  Crop windows are built from decoded float boxes, so
    no gradient reaches them.
    """
    mc = cfg.model

    def run(fn):
        if build_graph:
            return fn()
        with T.no_grad():
            return fn()

    init = im_to_float(seq.frames[0])
    win0 = make_crop_window(seq.init_box, cfg.template_factor, mc.ref_size)
    template = (crop_image(init, win0), global_to_crop(seq.init_box, win0))
    ctx = run(lambda: model.make_context([template]))
    steps: list[ForwardStep] = []
    n = min(cfg.n_global_search, len(seq.frames) - 1)
    for t in range(1, n + 1):
        frame = im_to_float(seq.frames[t])
        swin = full_window(frame.shape, mc.search_size)
        gt_crop = None
        if seq.labeled and t < len(seq.boxes):
            gt_crop = global_to_crop(seq.boxes[t], swin)
        view = SearchView(crop_image(frame, swin), swin, frame_index=t,
                          target_box=gt_crop)
        pm = run(lambda: model.forward(ctx, view))
        box_crop = decode(pm, mc.search_size, swin.frame)
        box_glob = crop_to_global(box_crop, swin)
        ref_win = make_crop_window(box_glob, cfg.template_factor, mc.ref_size)
        crop_img = crop_image(frame, ref_win)
        crop_box = global_to_crop(box_glob, ref_win)
        run(lambda: ctx.add(model.embed_reference(crop_img, crop_box), crop_box))
        steps.append(ForwardStep(ref_win, box_glob, crop_img, crop_box,
                                 pm if build_graph else None, swin, t))
    return steps


@dataclass
class BackwardResult:
    view_losses: list[Tensor]
    embeddings: list[InstanceEmbedding]
    boxes: list[BBox]           # decoded predictions, view-global coordinates
    specs: list[tuple[AugSpec, ...]]


def _tracking_terms(pm: PredictionMap, target: BBox, mc: ModelConfig,
                    lc: LossConfig) -> Tensor:
    """Focal + box regression of one prediction map against a crop-frame box."""
    maps = encode_gt(target, mc.grid, mc.search_size)
    lf = focal_loss(pm.score, maps.score, lc) * lc.weight_focal
    r, c = maps.center
    cell = np.array([r * mc.grid[1] + c])
    off = T.reshape(T.gather(T.reshape(pm.offset, (-1, 2)), cell), (2,))
    sz = T.reshape(T.gather(T.reshape(pm.size, (-1, 2)), cell), (2,))
    scale = mc.patch_size / mc.search_size
    centre = (off + np.array([c, r], dtype=np.float64)) * scale
    pred = T.concat([centre, sz])
    gt_norm = np.array([target.cx, target.cy, target.w, target.h]) / mc.search_size
    return lf + box_regression_loss(pred, gt_norm, lc)


def backward_phase(model, seq: SequenceSample, forward_steps: list[ForwardStep],
                   cfg: TrainConfig, rng: np.random.Generator,
                   labeled: bool = False) -> BackwardResult:
    """Local pass: track from the forward crops back onto augmented views
    of the initial frame, whose (transformed) box is known."""
    if not forward_steps:
        raise ValueError("backward_phase needs at least one forward crop")
    mc = cfg.model
    refs = forward_steps[-cfg.k_backward_refs:]
    ctx = model.make_context([(s.crop_img, s.crop_box) for s in refs])
    init = im_to_float(seq.frames[0])
    views = sample_views(init, seq.init_box, cfg.m_views, rng, cfg.aug)
    result = BackwardResult([], [], [], [])
    for vi, view in enumerate(views):
        swin = full_window(view.image.shape, mc.search_size)
        target = global_to_crop(view.box, swin)
        sview = SearchView(crop_image(view.image, swin), swin,
                           frame_index=0, target_box=target)
        pm = model.forward(ctx, sview)
        result.view_losses.append(_tracking_terms(pm, target, mc, cfg.loss))
        pred = decode(pm, mc.search_size, swin.frame)
        pool_box = target if labeled else pred
        emb = mask_pool(pm.search_tokens, mc.grid, mc.patch_size, pool_box)
        result.embeddings.append(InstanceEmbedding(emb, seq.name, vi))
        result.boxes.append(crop_to_global(pred, swin))
        result.specs.append(view.specs)
    return result


def train_step(model, batch: list[SequenceSample], cfg: TrainConfig,
               opt: AdamW | None, rng: np.random.Generator,
               lr_scale: float = 1.0) -> CycleBatchResult:
    """One optimizer update over a batch of sequences."""
    if not batch:
        raise ValueError("train_step: empty batch")
    mc = cfg.model
    track_terms: list[Tensor] = []
    embeddings: list[InstanceEmbedding] = []
    fwd_boxes, bwd_boxes, specs_used = [], [], []
    for seq in batch:
        labeled = seq.use_labels and seq.labeled
        with_graph = labeled and cfg.forward_loss
        fsteps = forward_phase(model, seq, cfg, build_graph=with_graph)
        fwd_boxes.append([s.box for s in fsteps])
        if with_graph:
            for s in fsteps:
                gt = seq.boxes[s.frame_index]
                track_terms.append(_tracking_terms(
                    s.pm, global_to_crop(gt, s.search_window), mc, cfg.loss))
        bres = backward_phase(model, seq, fsteps, cfg, rng, labeled=labeled)
        track_terms.extend(bres.view_losses)
        embeddings.extend(bres.embeddings)
        bwd_boxes.append(bres.boxes)
        specs_used.append(bres.specs)

    loss_track = T.mean(T.stack(track_terms))
    if cfg.use_contrastive:
        loss_cont, cont_skipped = contrastive_loss(embeddings, cfg.loss)
        if loss_cont.dtype != loss_track.dtype:
            loss_cont = Tensor(loss_cont.data.astype(loss_track.dtype))
    else:
        loss_cont, cont_skipped = Tensor(np.zeros((), dtype=loss_track.dtype)), True
    loss_all = loss_track + loss_cont

    if not np.isfinite(loss_all.data):
        raise TrainingDiverged(
            "non-finite loss; sequences="
            f"{[s.name for s in batch]} aug={specs_used}")
    if opt is not None:
        opt.zero_grad()
        loss_all.backward()
        opt.step(lr_scale)
    return CycleBatchResult(fwd_boxes, bwd_boxes,
                            loss_track.item(), loss_cont.item(), loss_all.item(),
                            {"contrastive_skipped": cont_skipped})


def _mark_labeled(dataset: list[SequenceSample], fraction: float,
                  seed: int) -> list[SequenceSample]:
    """Flag a deterministic fraction of sequences as allowed to use labels."""
    rng = np.random.default_rng(np.random.PCG64([seed, 0xFEED]))
    n_lab = int(round(fraction * len(dataset)))
    chosen = set(rng.permutation(len(dataset))[:n_lab].tolist())
    out = []
    for i, s in enumerate(dataset):
        out.append(SequenceSample(s.name, s.frames, s.boxes,
                                  use_labels=(i in chosen)))
    return out


def train(cfg: TrainConfig, dataset: list[SequenceSample], out_dir,
          resume: bool = False, log_cb=None) -> list[dict]:
    """Full training loop: per-epoch rng streams, JSON-lines log, a
    checkpoint per epoch plus rolling `last` and `best` files."""
    if not dataset:
        raise ValueError("train: empty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = _mark_labeled(dataset, cfg.labeled_fraction, cfg.seed)

    model = TrackerModel(cfg.model, seed=cfg.seed)
    opt = AdamW(model.params, lr_backbone=cfg.lr_backbone, lr_heads=cfg.lr_heads,
                weight_decay=cfg.weight_decay)
    start_epoch = 0
    last_path = out_dir / "last.ckpt"
    if resume and last_path.exists():
        model, rest, meta = TrackerModel.load(last_path)
        opt = AdamW(model.params, lr_backbone=cfg.lr_backbone,
                    lr_heads=cfg.lr_heads, weight_decay=cfg.weight_decay)
        opt.load_state_arrays(rest, meta.get("opt_step", 0))
        start_epoch = int(meta.get("epoch", 0))

    log_path = out_dir / "train_log.jsonl"
    log_mode = "a" if (resume and start_epoch > 0) else "w"
    log: list[dict] = []
    best = float("inf")
    (out_dir / "config.json").write_text(cfg.to_json())

    def save(tag, epoch):
        model.save(out_dir / f"{tag}.ckpt",
                   extra_meta={"epoch": epoch, "opt_step": opt.step_count,
                               "train_config": cfg.to_json()},
                   extra_tensors=opt.state_arrays())

    save("last", start_epoch)
    if cfg.steps_per_epoch == 0 or cfg.epochs == 0:
        save("best", start_epoch)
        return log

    global_step = start_epoch * cfg.steps_per_epoch
    with open(log_path, log_mode) as logf:
        for epoch in range(start_epoch, cfg.epochs):
            rng = np.random.default_rng(np.random.PCG64([cfg.seed, 1 + epoch]))
            lr_scale = cfg.lr_drop_factor if epoch >= cfg.lr_drop_epoch else 1.0
            epoch_losses = []
            for _ in range(cfg.steps_per_epoch):
                idx = rng.choice(len(dataset), size=cfg.batch_size,
                                 replace=len(dataset) < cfg.batch_size)
                res = train_step(model, [dataset[i] for i in idx], cfg, opt,
                                 rng, lr_scale)
                global_step += 1
                entry = {"step": global_step, "epoch": epoch,
                         "loss_track": res.loss_track,
                         "loss_cont": res.loss_cont,
                         "loss_all": res.loss_all,
                         "lr": cfg.lr_backbone * lr_scale}
                log.append(entry)
                logf.write(json.dumps(entry, sort_keys=True) + "\n")
                epoch_losses.append(res.loss_all)
                if log_cb:
                    log_cb(entry)
            save(f"epoch_{epoch + 1:03d}", epoch + 1)
            save("last", epoch + 1)
            if np.mean(epoch_losses) < best:
                best = float(np.mean(epoch_losses))
                save("best", epoch + 1)
    return log
