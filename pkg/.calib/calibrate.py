import json, sys, time
import numpy as np
sys.stdout.reconfigure(line_buffering=True)
from sstrack.pipeline import ci_config, train
from sstrack.model import TrackerModel
from sstrack.synth import make_dataset
from sstrack.evaluate import evaluate_dataset, static_baseline, sequence_scores

seed = int(sys.argv[1])
use_cont = sys.argv[2] == "on"

train_ds = make_dataset("easy", seed=1000 + 0, num=64)   # shared data across seeds
held = make_dataset("easy", seed=9000, num=16)

cfg = ci_config(seed=seed, use_contrastive=use_cont)
t0 = time.time()
out = f"/root/pkg/.calib/run_s{seed}_{'on' if use_cont else 'off'}"
log = train(cfg, train_ds, out)
t1 = time.time()

first = np.mean([e["loss_all"] for e in log[:20]])
last = np.mean([e["loss_all"] for e in log[-20:]])

model, _, _ = TrackerModel.load(out + "/last.ckpt")
rep = evaluate_dataset(model, held)
ao = rep["aggregate"]["ao"]

base = []
for s in held:
    ious, _, _ = sequence_scores(static_baseline(s), s.boxes)
    base += ious
base_ao = float(np.mean(base))

print(json.dumps({"seed": seed, "cont": use_cont, "train_min": round((t1-t0)/60,2),
                  "loss_first20": round(float(first),4), "loss_last20": round(float(last),4),
                  "ratio": round(float(last/first),4), "held_ao": round(float(ao),4),
                  "static_ao": round(base_ao,4), "margin": round(float(ao-base_ao),4)}))
