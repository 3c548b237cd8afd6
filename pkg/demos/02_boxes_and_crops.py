"""Box geometry: overlap measures, crop windows, and the exact coordinate
round trip between global frames and crop windows.

Run:  python3 demos/02_boxes_and_crops.py
"""
import numpy as np

from sstrack.boxes import (BBox, crop_image, crop_to_global, giou,
                           global_to_crop, iou, make_crop_window)

a = BBox.from_xyxy(0, 0, 2, 2)
b = BBox.from_xyxy(1, 1, 3, 3)
print(f"iou  of unit-overlap pair: {iou(a, b):.6f}   (1/7)")
print(f"giou of the same pair:     {giou(a, b):.6f}   (1/7 - 2/9)")

c = BBox.from_xyxy(2, 2, 3, 3)
print(f"giou of disjoint boxes:    {giou(a, c):.6f}   (-7/9)")

# Template crops use context factor 2, search crops 4: square windows
# sized by sqrt(w*h), so aspect ratio never skews the crop.
target = BBox(50.0, 50.0, 16.0, 16.0)
print("\ntemplate window:", make_crop_window(target, 2.0, 64))
print("search window:  ", make_crop_window(target, 4.0, 128))

# Coordinates map between frames exactly (up to float rounding ~1e-12),
# which is what lets predictions decoded in crop space land back on the
# global frame without drift.
win = make_crop_window(target, 4.0, 128)
in_crop = global_to_crop(target, win)
back = crop_to_global(in_crop, win)
print(f"\nround trip error: {max(abs(back.cx - target.cx), abs(back.w - target.w)):.2e}")
print(f"a centered box stays centered: crop center = ({in_crop.cx}, {in_crop.cy})")

# Image crops resample bilinearly and pad out-of-frame pixels with the
# per-channel mean, so crops near borders don't invent dark edges.
rng = np.random.default_rng(3)
img = rng.random((80, 80, 3)).astype(np.float32)
edge_win = make_crop_window(BBox(4.0, 4.0, 16.0, 16.0), 4.0, 64)
crop = crop_image(img, edge_win)
print(f"\nedge crop shape {crop.shape}, mean {crop.mean():.3f} "
      f"(image mean {img.mean():.3f})")
