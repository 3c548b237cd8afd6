"""Hand-rolled SVG line plots (figures are outputs here, not interfaces,
so no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .evaluate import SUCCESS_THRESHOLDS, success_curve

W, H = 480, 340
MARGIN = 52
PALETTE = ("#1f6fb2", "#d1495b", "#3a9d5d", "#8f6fc2")


def _polyline(xs, ys, xlim, ylim):
    pts = []
    for x, y in zip(xs, ys):
        px = MARGIN + (x - xlim[0]) / (xlim[1] - xlim[0]) * (W - 2 * MARGIN)
        py = H - MARGIN - (y - ylim[0]) / (ylim[1] - ylim[0]) * (H - 2 * MARGIN)
        pts.append(f"{px:.2f},{py:.2f}")
    return " ".join(pts)


def line_plot(path, series: dict[str, tuple[list, list]], xlabel: str,
              ylabel: str, title: str, ylim=None):
    """Write one SVG chart with a list of named (xs, ys) series."""
    all_x = np.concatenate([np.asarray(xs, dtype=float) for xs, _ in series.values()])
    all_y = np.concatenate([np.asarray(ys, dtype=float) for _, ys in series.values()])
    xlim = (float(all_x.min()), float(all_x.max()) or 1.0)
    if xlim[0] == xlim[1]:
        xlim = (xlim[0], xlim[0] + 1.0)
    if ylim is None:
        lo, hi = float(all_y.min()), float(all_y.max())
        pad = (hi - lo) * 0.05 or 0.5
        ylim = (lo - pad, hi + pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" '
        f'height="{H - 2 * MARGIN}" fill="none" stroke="#888"/>',
        f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {H / 2})">'
        f'{escape(ylabel)}</text>',
    ]
    for tick in np.linspace(ylim[0], ylim[1], 5):
        py = H - MARGIN - (tick - ylim[0]) / (ylim[1] - ylim[0]) * (H - 2 * MARGIN)
        parts.append(f'<text x="{MARGIN - 6}" y="{py + 4:.1f}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">{tick:.2f}</text>')
    for tick in np.linspace(xlim[0], xlim[1], 5):
        px = MARGIN + (tick - xlim[0]) / (xlim[1] - xlim[0]) * (W - 2 * MARGIN)
        parts.append(f'<text x="{px:.1f}" y="{H - MARGIN + 16}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">{tick:g}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<polyline points="{_polyline(xs, ys, xlim, ylim)}" '
                     f'fill="none" stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{W - MARGIN - 4}" y="{MARGIN + 16 + 14 * i}" '
                     f'text-anchor="end" font-size="11" fill="{color}" '
                     f'font-family="sans-serif">{escape(name)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _all_ious(report: dict) -> list[float]:
    out = []
    for seq in report["per_sequence"].values():
        out += seq["iou"]
    return out


def _all_errs(report: dict) -> list[float]:
    out = []
    for seq in report["per_sequence"].values():
        out += seq["err"]
    return out


def plot_report(report: dict, out_dir) -> list[Path]:
    """Success and precision curves for an evaluation report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ious = _all_ious(report)
    curve = success_curve(ious)
    p1 = out_dir / "success.svg"
    line_plot(p1, {"success": (SUCCESS_THRESHOLDS.tolist(), curve.tolist())},
              "overlap threshold", "success rate",
              f"Success plot (AUC {report['aggregate']['auc']:.3f})", ylim=(0, 1))
    errs = np.asarray(_all_errs(report))
    thr = np.linspace(0.0, 50.0, 101)
    prec = (errs[:, None] < thr[None, :]).mean(axis=0)
    p2 = out_dir / "precision.svg"
    line_plot(p2, {"precision": (thr.tolist(), prec.tolist())},
              "center error threshold (px)", "precision",
              f"Precision plot (P@20 {report['aggregate']['p']:.3f})", ylim=(0, 1))
    return [p1, p2]


def plot_training_log(log: list[dict], out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = [e["step"] for e in log]
    series = {key: (steps, [e[key] for e in log])
              for key in ("loss_all", "loss_track", "loss_cont")}
    path = out_dir / "loss.svg"
    line_plot(path, series, "step", "loss", "Training loss")
    return path
