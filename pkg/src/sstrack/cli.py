"""Command-line entry point.

Subcommands: ``generate`` (synthetic datasets), ``train``, ``eval``,
``plot`` (SVG curves from a report / training log), ``selftest``
(gradient + geometry oracle suites).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _cmd_generate(args) -> int:
    from .synth import make_dataset, write_dataset
    samples = make_dataset(args.preset, args.seed, args.num)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} {args.preset!r} sequences to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .pipeline import TrainConfig, train
    from .synth import read_dataset
    cfg = TrainConfig.from_json_file(args.config)
    dataset = read_dataset(args.data)
    if not dataset:
        print(f"error: no sequences under {args.data}", file=sys.stderr)
        return 1
    log = train(cfg, dataset, args.out, resume=args.resume)
    if log:
        print(f"trained {log[-1]['step']} steps; final loss_all "
              f"{log[-1]['loss_all']:.4f}; checkpoints in {args.out}")
    else:
        print(f"no training steps to run; checkpoints in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluate import TrackerSettings, build_report, save_report
    from .model import BoxOracleModel, TrackerModel
    from .synth import read_dataset
    dataset = read_dataset(args.data)
    if not dataset:
        print(f"error: no sequences under {args.data}", file=sys.stderr)
        return 1
    model, _, meta = TrackerModel.load(args.ckpt)
    if args.oracle:
        model = BoxOracleModel(model.cfg)
    settings = TrackerSettings(max_refs=3 if args.multi_ref else 1)
    report = build_report(model, dataset, ckpt_path=args.ckpt,
                          config_text=meta.get("train_config", ""),
                          seed=args.seed, settings=settings,
                          use_gt_oracle=args.oracle)
    save_report(report, args.report)
    agg = report["aggregate"]
    print("  ".join(f"{k}={v:.4f}" for k, v in sorted(agg.items())))
    print(f"report written to {args.report}")
    return 0


def _cmd_plot(args) -> int:
    from .evaluate import load_report
    from .plots import plot_report, plot_training_log
    report = load_report(args.report)
    paths = plot_report(report, args.out)
    log_path = Path(args.log) if args.log else None
    if log_path and log_path.exists():
        log = [json.loads(line) for line in log_path.read_text().splitlines()]
        paths.append(plot_training_log(log, args.out))
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_selftest(args) -> int:
    from . import tensor as T
    from .boxes import BBox, crop_to_global, global_to_crop, giou, iou, make_crop_window
    from .gradcheck import check_gradients
    from .tensor import Tensor

    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  {detail}" if detail else ""))
        failures += 0 if ok else 1

    rng = np.random.default_rng(0)
    ops = {
        "matmul": lambda a, b: T.sum_(T.matmul(a, b)),
        "softmax": lambda a, b: T.sum_(T.softmax(a) * T.softmax(b)),
        "layer_norm": lambda a, b: T.sum_(T.layer_norm(a + b) * b),
        "gelu": lambda a, b: T.sum_(T.gelu(a) * b),
        "mul/div": lambda a, b: T.sum_(a * b / (b * b + 1.0)),
    }
    for name, fn in ops.items():
        a = Tensor(rng.standard_normal((4, 4)), requires_grad=True, dtype=np.float64)
        b = Tensor(rng.standard_normal((4, 4)), requires_grad=True, dtype=np.float64)
        err = check_gradients(lambda: fn(a, b), [a, b])
        check(f"gradient {name}", err < 1e-4, f"rel err {err:.2e}")

    # geometry: analytic iou/giou vs pixel rasterization on integer boxes
    worst = 0.0
    for _ in range(200):
        x = rng.integers(0, 60, size=8)
        a = BBox.from_xyxy(min(x[0], x[1]), min(x[2], x[3]),
                           max(x[0], x[1]) + 1, max(x[2], x[3]) + 1)
        b = BBox.from_xyxy(min(x[4], x[5]), min(x[6], x[7]),
                           max(x[4], x[5]) + 1, max(x[6], x[7]) + 1)
        grid = np.zeros((64, 64), dtype=bool)
        ga = grid.copy()
        ax1, ay1, ax2, ay2 = (int(v) for v in a.xyxy)
        bx1, by1, bx2, by2 = (int(v) for v in b.xyxy)
        ga[ay1:ay2, ax1:ax2] = True
        gb = grid.copy()
        gb[by1:by2, bx1:bx2] = True
        inter = float((ga & gb).sum())
        union = float((ga | gb).sum())
        worst = max(worst, abs(iou(a, b) - (inter / union if union else 0.0)))
    check("iou vs rasterization", worst < 1e-3, f"abs err {worst:.2e}")
    check("giou bound", all(
        giou(p, q) <= iou(p, q) + 1e-12
        for p, q in [(BBox(10, 10, 4, 4), BBox(12, 11, 6, 3))]))

    # crop round trip
    worst = 0.0
    for _ in range(100):
        b = BBox(*(rng.uniform(10, 150, size=2)), *(rng.uniform(4, 40, size=2)))
        win = make_crop_window(b, 2.0, 64)
        rb = crop_to_global(global_to_crop(b, win), win)
        worst = max(worst, abs(rb.cx - b.cx), abs(rb.cy - b.cy),
                    abs(rb.w - b.w), abs(rb.h - b.h))
    check("crop round trip", worst < 1e-9, f"max err {worst:.2e}")

    if failures:
        print(f"FAILED: {failures} failing check(s)")
    else:
        print("OK: all checks passed")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sstrack",
        description="Self-supervised tracker: synthetic data, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--preset", choices=("easy", "hard", "ci"), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--num", type=int, default=16)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_generate)

    t = sub.add_parser("train", help="train from a config JSON")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--resume", action="store_true")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--oracle", action="store_true",
                   help="replace the model with the ground-truth box oracle")
    e.add_argument("--multi-ref", action="store_true",
                   help="keep 3 references at inference instead of 1")
    e.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("plot", help="SVG curves from a report (and optional log)")
    p.add_argument("--report", required=True)
    p.add_argument("--log", default=None, help="train_log.jsonl for a loss curve")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_plot)

    s = sub.add_parser("selftest", help="run gradient and geometry oracles")
    s.set_defaults(fn=_cmd_selftest)
    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        raise
    except Exception as e:  # runtime failure -> exit 1 with a diagnostic
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
