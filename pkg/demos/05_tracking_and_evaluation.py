"""Inference and evaluation: local tracking from the frame-1 template,
one-pass metrics, reports, and SVG curves.

Run:  python3 demos/05_tracking_and_evaluation.py     (~1 minute)
"""
import tempfile
from pathlib import Path

import numpy as np

from sstrack.evaluate import (build_report, evaluate_dataset, save_report,
                              sequence_scores, static_baseline, track_sequence)
from sstrack.model import BoxOracleModel, ModelConfig, TrackerModel
from sstrack.plots import plot_report
from sstrack.synth import make_dataset

heldout = make_dataset("easy", seed=42, num=8)

# Deployment keeps only the local component: template = frame-1 crop,
# search = a window around the previous prediction.
model = TrackerModel(ModelConfig(), seed=0)     # untrained, for the mechanics
pred = track_sequence(model, heldout[0])
print(f"tracked {len(pred)} frames; first prediction {pred[0]}")

# The two reference points for any run: the ground-truth box oracle
# (upper bound, checks the plumbing) and the static frame-1 box (floor).
oracle_rep = evaluate_dataset(BoxOracleModel(model.cfg), heldout,
                              use_gt_oracle=True)
print("\noracle aggregates: ",
      {k: round(v, 4) for k, v in oracle_rep["aggregate"].items()})

base_iou = []
for s in heldout:
    ious, _, _ = sequence_scores(static_baseline(s), s.boxes)
    base_iou += ious
print(f"static-box floor:   mean IoU {np.mean(base_iou):.3f}")

untrained = evaluate_dataset(model, heldout)
print("untrained model:   ",
      {k: round(v, 4) for k, v in untrained["aggregate"].items()})

# Reports serialize to JSON (reproducible modulo the timestamp) and plot
# to dependency-free SVG.
with tempfile.TemporaryDirectory() as tmp:
    report = build_report(BoxOracleModel(model.cfg), heldout, seed=0,
                          use_gt_oracle=True)
    save_report(report, Path(tmp) / "report.json")
    paths = plot_report(report, tmp)
    print("\nwrote:", ", ".join(p.name for p in paths))
    print("train a real model first for meaningful curves:")
    print("  sstrack generate --preset ci --seed 1000 --num 64 --out data/train")
    print("  sstrack train --config configs/ci.json --data data/train --out runs/ci")
    print("  sstrack eval --ckpt runs/ci/best.ckpt --data data/heldout --report report.json")
