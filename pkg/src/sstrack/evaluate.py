"""Inference-time tracking, metrics and report generation.

Deployment keeps only the local component: a fixed initial template (one
reference by default) and a per-frame search crop centered on the previous
prediction.  Metrics follow the one-pass convention: AO is the mean of all
per-frame overlaps, SR_t the fraction above t (strict), success AUC the
mean success rate over 101 overlap thresholds, precision the fraction of
frames with center error under 20 px, and normalized precision averages
over a 0..0.5 threshold grid of size-normalized errors.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import tensor as T
from .boxes import (BBox, crop_image, crop_to_global, global_to_crop,
                    iou, make_crop_window)
from .model import SearchView, decode
from .synth import SequenceSample, im_to_float

THREADS_ENV = "SSTRACK_THREADS"


@dataclass
class TrackerSettings:
    template_factor: float = 2.0
    search_factor: float = 4.0
    max_refs: int = 1          # template-only context unless multi-ref mode


def track_sequence(model, seq: SequenceSample,
                   settings: TrackerSettings | None = None,
                   use_gt_oracle: bool = False) -> list[BBox]:
    """One box per frame >= 2, global coordinates.

    The sequence is ground-truth-stripped before tracking unless the
    plumbing-check oracle explicitly asks for the true boxes.
    """
    settings = settings or TrackerSettings()
    mc = model.cfg
    gt = list(seq.boxes) if (use_gt_oracle and seq.labeled) else None
    seq = seq.gt_stripped()
    init = im_to_float(seq.frames[0])
    twin = make_crop_window(seq.init_box, settings.template_factor, mc.ref_size)
    refs = [(crop_image(init, twin), global_to_crop(seq.init_box, twin))]
    ctx = model.make_context(refs)
    prev = seq.init_box
    out: list[BBox] = []
    max_refs = min(settings.max_refs, mc.max_refs)
    with T.no_grad():
        for t in range(1, len(seq.frames)):
            frame = im_to_float(seq.frames[t])
            swin = make_crop_window(prev, settings.search_factor, mc.search_size)
            target = global_to_crop(gt[t], swin) if gt is not None else None
            view = SearchView(crop_image(frame, swin), swin, frame_index=t,
                              target_box=target)
            pm = model.forward(ctx, view)
            box = crop_to_global(decode(pm, mc.search_size, swin.frame), swin)
            out.append(box)
            prev = box
            if max_refs > 1:
                rwin = make_crop_window(box, settings.template_factor, mc.ref_size)
                ctx.add(model.embed_reference(crop_image(frame, rwin),
                                              global_to_crop(box, rwin)),
                        global_to_crop(box, rwin))
                while len(ctx.entries) > max_refs:
                    del ctx.entries[1]
    return out


def static_baseline(seq: SequenceSample) -> list[BBox]:
    """Repeat the frame-1 box: the floor any learned tracker must beat."""
    return [seq.init_box] * (len(seq.frames) - 1)


# -- metrics -----------------------------------------------------------------

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
NORM_PREC_THRESHOLDS = np.linspace(0.0, 0.5, 101)
PRECISION_PX = 20.0


def success_curve(ious) -> np.ndarray:
    """Success rate per overlap threshold, strict inequality except that the
    top (unreachable-by->') bin counts exact full overlap."""
    v = np.asarray(ious, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty IoU trace")
    curve = (v[:, None] > SUCCESS_THRESHOLDS[None, :]).mean(axis=0)
    curve[-1] = (v >= SUCCESS_THRESHOLDS[-1]).mean()
    return curve


def success_auc(ious) -> float:
    return float(success_curve(ious).mean())


def precision(center_errs, thr: float = PRECISION_PX) -> float:
    v = np.asarray(center_errs, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty error trace")
    return float((v < thr).mean())


def norm_precision(norm_center_errs) -> float:
    """Mean fraction under each normalized-error threshold; the degenerate
    zero threshold counts exact hits so a perfect trace scores 1."""
    v = np.asarray(norm_center_errs, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty error trace")
    frac = (v[:, None] < NORM_PREC_THRESHOLDS[None, :]).mean(axis=0)
    frac[0] = (v <= 0.0).mean()
    return float(frac.mean())


def ao_sr(ious) -> tuple[float, float, float]:
    v = np.asarray(ious, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty IoU trace")
    return float(v.mean()), float((v > 0.5).mean()), float((v > 0.75).mean())


def center_error(a: BBox, b: BBox) -> float:
    return float(np.hypot(a.cx - b.cx, a.cy - b.cy))


def norm_center_error(pred: BBox, gt: BBox) -> float:
    return float(np.hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h))


# -- report ------------------------------------------------------------------


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sequence_scores(pred: list[BBox], gt: list[BBox]):
    """Per-frame IoU / center error / normalized error for frames >= 2."""
    ious, errs, nerrs = [], [], []
    for p, g in zip(pred, gt[1:]):
        ious.append(iou(p, g))
        errs.append(center_error(p, g))
        nerrs.append(norm_center_error(p, g))
    return ious, errs, nerrs


def evaluate_dataset(model, dataset: list[SequenceSample],
                     settings: TrackerSettings | None = None,
                     use_gt_oracle: bool = False) -> dict:
    """Track every labeled sequence and assemble per-sequence traces plus
    aggregates over all frames.  Parallelism is capped by SSTRACK_THREADS."""
    labeled = [s for s in dataset if s.labeled]
    if not labeled:
        raise ValueError("evaluate_dataset: no sequence has full ground truth")

    def run(seq):
        pred = track_sequence(model, seq, settings, use_gt_oracle=use_gt_oracle)
        return seq.name, sequence_scores(pred, seq.boxes)

    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            results = dict(ex.map(run, labeled))
    else:
        results = dict(run(s) for s in labeled)

    per_seq = {}
    all_iou, all_err, all_nerr = [], [], []
    for name in sorted(results):
        ious, errs, nerrs = results[name]
        per_seq[name] = {"iou": ious, "err": errs}
        all_iou += ious
        all_err += errs
        all_nerr += nerrs
    ao, sr50, sr75 = ao_sr(all_iou)
    aggregate = {
        "auc": success_auc(all_iou),
        "p": precision(all_err),
        "p_norm": norm_precision(all_nerr),
        "ao": ao,
        "sr_0.5": sr50,
        "sr_0.75": sr75,
    }
    return {"per_sequence": per_seq, "aggregate": aggregate}


def build_report(model, dataset, ckpt_path=None, config_text: str = "",
                 seed: int = 0, settings: TrackerSettings | None = None,
                 use_gt_oracle: bool = False) -> dict:
    body = evaluate_dataset(model, dataset, settings, use_gt_oracle=use_gt_oracle)
    meta = {
        "ckpt_hash": _sha256(ckpt_path) if ckpt_path else "",
        "config_hash": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    return {"meta": meta, **body}


def save_report(report: dict, path):
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())
