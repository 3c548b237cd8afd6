"""Deterministic synthetic tracking sequences.

Textured sprites (ellipse / rectangle / diamond) move over value-noise
backgrounds with optional distractors and an occluding bar.  Ground truth
is the tight axis-aligned box of the rasterized target mask, computed
before occlusion is painted.  Sequences serialize to a GOT10K-style
directory: ``<root>/<seq>/frames/%06d.ppm`` + ``groundtruth.txt`` +
``<root>/list.txt``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox

TRAJECTORIES = ("linear", "sinusoidal", "random_walk")
SHAPES = ("ellipse", "rect", "diamond")


class SceneError(ValueError):
    """Raised when a scene spec cannot produce a valid sequence."""


@dataclass
class SpriteSpec:
    shape: str = "ellipse"
    texture_seed: int = 0
    width: float = 40.0
    height: float = 40.0
    trajectory: str = "linear"
    speed: float = 2.0          # px / frame
    heading: float = 0.0        # radians, for linear / sinusoidal drift axis
    start: tuple[float, float] | None = None
    scale_drift: float = 0.0    # relative size change per frame
    spin: float = 0.0           # radians / frame
    sine_amp: float = 16.0
    sine_period: float = 24.0
    brightness: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise SceneError(f"unknown sprite shape {self.shape!r}")
        if self.trajectory not in TRAJECTORIES:
            raise SceneError(f"unknown trajectory {self.trajectory!r}")


@dataclass
class OccluderSpec:
    width: float = 24.0
    speed: float = 6.0
    start_x: float = 0.0
    value: float = 0.35


@dataclass
class SceneSpec:
    frame_size: int = 160
    num_frames: int = 24
    target: SpriteSpec = field(default_factory=SpriteSpec)
    distractors: tuple[SpriteSpec, ...] = ()
    occluder: OccluderSpec | None = None
    rng_seed: int = 0


@dataclass
class SequenceSample:
    """A clip plus whatever ground truth is known (always frame 1)."""

    name: str
    frames: list[np.ndarray]          # uint8 HWC
    boxes: list[BBox]                 # len == len(frames) when labeled
    use_labels: bool = False          # training may read gt beyond frame 1

    @property
    def labeled(self) -> bool:
        return len(self.boxes) == len(self.frames)

    @property
    def init_box(self) -> BBox:
        return self.boxes[0]

    def gt_stripped(self) -> "SequenceSample":
        return SequenceSample(self.name, self.frames, [self.boxes[0]], False)


def im_to_float(img: np.ndarray) -> np.ndarray:
    if img.dtype == np.uint8:
        return img.astype(np.float32) / 255.0
    return img.astype(np.float32, copy=False)


# -- trajectory + rasterization ------------------------------------------------


def _margin(spec: SceneSpec) -> float:
    t = spec.target
    return max(t.width, t.height) * 0.6 + 4.0


def _round4(x: float) -> float:
    return round(x * 1e4) / 1e4


def _centers(spec: SceneSpec, sprite: SpriteSpec,
             rng: np.random.Generator) -> list[tuple[float, float]]:
    s = spec.frame_size
    lo, hi = _margin(spec), s - _margin(spec)
    if lo >= hi:
        raise SceneError(f"sprite too large for frame: margin {lo:.1f} vs size {s}")
    n = spec.num_frames
    if sprite.trajectory == "random_walk":
        if sprite.start is not None:
            x, y = sprite.start
        else:
            x, y = rng.uniform(lo, hi), rng.uniform(lo, hi)
        pts = []
        span = hi - lo
        for _ in range(n):
            pts.append((x, y))
            ang = rng.uniform(0.0, 2.0 * math.pi)
            # reflect at the margins so walks are always feasible
            x = lo + abs((x + sprite.speed * math.cos(ang) - lo) % (2 * span) - span)
            y = lo + abs((y + sprite.speed * math.sin(ang) - lo) % (2 * span) - span)
    else:
        if sprite.trajectory == "linear":
            vx = sprite.speed * math.cos(sprite.heading)
            vy = sprite.speed * math.sin(sprite.heading)
            off = [(vx * t, vy * t) for t in range(n)]
        else:  # sinusoidal: drift along heading, oscillate across it
            c, sn = math.cos(sprite.heading), math.sin(sprite.heading)
            off = []
            for t in range(n):
                u = sprite.speed * t
                v = sprite.sine_amp * math.sin(2.0 * math.pi * t / sprite.sine_period)
                off.append((u * c - v * sn, u * sn + v * c))
        oxs = [o[0] for o in off]
        oys = [o[1] for o in off]
        if sprite.start is not None:
            x0, y0 = sprite.start
        else:
            xlo, xhi = lo - min(oxs), hi - max(oxs)
            ylo, yhi = lo - min(oys), hi - max(oys)
            if xlo > xhi or ylo > yhi:
                raise SceneError(
                    f"no feasible start: path spans {max(oxs)-min(oxs):.0f}x"
                    f"{max(oys)-min(oys):.0f} px inside [{lo:.0f}, {hi:.0f}]")
            x0, y0 = rng.uniform(xlo, xhi), rng.uniform(ylo, yhi)
        pts = [(x0 + ox, y0 + oy) for ox, oy in off]
    for (x, y) in pts:
        if not (lo - 1e-6 <= x <= hi + 1e-6 and lo - 1e-6 <= y <= hi + 1e-6):
            raise SceneError(
                f"trajectory leaves frame margins at ({x:.1f}, {y:.1f}); "
                f"allowed [{lo:.1f}, {hi:.1f}]")
    return [(_round4(x), _round4(y)) for (x, y) in pts]


def _texture(seed: int, n: int = 5) -> np.ndarray:
    rng = np.random.default_rng(np.random.PCG64(seed))
    return rng.uniform(0.35, 1.0, (n, n, 3))


def _bilinear_grid(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample a coarse grid at normalized coords in [0, 1]."""
    n = tex.shape[0]
    fu = np.clip(u, 0.0, 1.0) * (n - 1)
    fv = np.clip(v, 0.0, 1.0) * (n - 1)
    i0 = np.floor(fv).astype(int)
    j0 = np.floor(fu).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    j1 = np.minimum(j0 + 1, n - 1)
    tv = (fv - i0)[..., None]
    tu = (fu - j0)[..., None]
    top = tex[i0, j0] * (1 - tu) + tex[i0, j1] * tu
    bot = tex[i1, j0] * (1 - tu) + tex[i1, j1] * tu
    return top * (1 - tv) + bot * tv


def _paint(frame: np.ndarray, sprite: SpriteSpec, center, scale, angle, tex):
    """Draw the sprite; returns the boolean mask placed in frame coords."""
    size = frame.shape[0]
    cx, cy = center
    hw = sprite.width * scale / 2.0
    hh = sprite.height * scale / 2.0
    reach = math.hypot(hw, hh) + 2.0
    c0 = max(int(cx - reach), 0)
    c1 = min(int(cx + reach) + 1, size)
    r0 = max(int(cy - reach), 0)
    r1 = min(int(cy + reach) + 1, size)
    full_mask = np.zeros(frame.shape[:2], dtype=bool)
    if c0 >= c1 or r0 >= r1:
        return full_mask
    ys, xs = np.mgrid[r0:r1, c0:c1]
    px = xs + 0.5 - cx
    py = ys + 0.5 - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = (px * ca + py * sa)
    v = (-px * sa + py * ca)
    if sprite.shape == "ellipse":
        mask = (u / hw) ** 2 + (v / hh) ** 2 <= 1.0
    elif sprite.shape == "rect":
        mask = (np.abs(u) <= hw) & (np.abs(v) <= hh)
    else:
        mask = np.abs(u) / hw + np.abs(v) / hh <= 1.0
    colors = _bilinear_grid(tex, u / (2 * hw) + 0.5, v / (2 * hh) + 0.5)
    colors = np.clip(colors * sprite.brightness, 0.0, 1.0)
    region = frame[r0:r1, c0:c1]
    region[mask] = colors[mask]
    full_mask[r0:r1, c0:c1] = mask
    return full_mask


def mask_aabb(mask: np.ndarray) -> BBox | None:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    x, y = int(cols[0]), int(rows[0])
    w = int(cols[-1]) - x + 1
    h = int(rows[-1]) - y + 1
    return BBox.from_ltwh(float(x), float(y), float(w), float(h))


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    s = spec.frame_size
    coarse = rng.uniform(0.08, 0.45, (9, 9, 3))
    u, v = np.meshgrid(np.linspace(0, 1, s), np.linspace(0, 1, s))
    bg = _bilinear_grid(coarse, u, v)
    # a few static low-contrast shapes for clutter
    for _ in range(3):
        w = rng.uniform(10, 30)
        h = rng.uniform(10, 30)
        x = rng.uniform(0, s - w)
        y = rng.uniform(0, s - h)
        tone = rng.uniform(0.05, 0.5, 3)
        bg[int(y):int(y + h), int(x):int(x + w)] = (
            0.5 * bg[int(y):int(y + h), int(x):int(x + w)] + 0.5 * tone)
    return bg.astype(np.float64)


def _layout(spec: SceneSpec):
    """Deterministic scene layout: background, textures, all trajectories."""
    rng = np.random.default_rng(np.random.PCG64(spec.rng_seed))
    bg = _background(spec, rng)
    target_tex = _texture(spec.target.texture_seed)
    d_texs = [_texture(d.texture_seed) for d in spec.distractors]
    centers = _centers(spec, spec.target, rng)
    d_centers = [_centers(spec, d, rng) for d in spec.distractors]
    return bg, target_tex, d_texs, centers, d_centers


def target_mask(spec: SceneSpec, t: int) -> np.ndarray:
    """Re-rasterize the target mask of frame t (oracle for the stored gt)."""
    _, tex, _, centers, _ = _layout(spec)
    scratch = np.zeros((spec.frame_size, spec.frame_size, 3))
    scale_t = max(1.0 + spec.target.scale_drift * t, 0.3)
    return _paint(scratch, spec.target, centers[t], scale_t,
                  spec.target.spin * t, tex)


def generate(spec: SceneSpec, name: str = "seq") -> SequenceSample:
    """Render frames and exact per-frame ground truth (deterministic in
    the scene's seed)."""
    bg, target_tex, d_texs, centers, d_centers = _layout(spec)

    frames: list[np.ndarray] = []
    boxes: list[BBox] = []
    for t in range(spec.num_frames):
        frame = bg.copy()
        scale_t = max(1.0 + spec.target.scale_drift * t, 0.3)
        for d, dc, dt in zip(spec.distractors, d_centers, d_texs):
            d_scale = max(1.0 + d.scale_drift * t, 0.3)
            _paint(frame, d, dc[t], d_scale, d.spin * t, dt)
        mask = _paint(frame, spec.target, centers[t], scale_t,
                      spec.target.spin * t, target_tex)
        box = mask_aabb(mask)
        if box is None:
            raise SceneError(f"target fully out of frame at t={t}")
        if spec.occluder is not None:
            occ = spec.occluder
            x = (occ.start_x + occ.speed * t) % spec.frame_size
            x0, x1 = int(x), min(int(x + occ.width), spec.frame_size)
            frame[:, x0:x1] = occ.value
            if t == 0:
                visible = mask.copy()
                visible[:, x0:x1] = False
                if visible.sum() < 0.25 * mask.sum():
                    raise SceneError("target < 25% visible in frame 1")
        frames.append(np.round(frame * 255.0).astype(np.uint8))
        boxes.append(box)
    return SequenceSample(name, frames, boxes)


# -- presets ---------------------------------------------------------------


def preset_scenes(preset: str, seed: int, num: int) -> list[SceneSpec]:
    """Named difficulty tiers; `ci` is the easy tier (training-sized sets
    just ask for more sequences)."""
    if preset not in ("easy", "hard", "ci"):
        raise ValueError(f"unknown preset {preset!r}")
    specs = []
    for i in range(num):
        rng = np.random.default_rng(np.random.PCG64([seed, i]))
        shape = SHAPES[i % len(SHAPES)]
        w = rng.uniform(34, 48)
        h = w * rng.uniform(0.8, 1.25)
        common = dict(shape=shape, texture_seed=int(rng.integers(1 << 30)),
                      width=w, height=h)
        if preset in ("easy", "ci"):
            target = SpriteSpec(trajectory="linear",
                                speed=rng.uniform(2.0, 3.5),
                                heading=rng.uniform(0, 2 * math.pi),
                                scale_drift=rng.uniform(-0.004, 0.004),
                                **common)
            spec = SceneSpec(frame_size=160, num_frames=24, target=target,
                             rng_seed=int(rng.integers(1 << 30)))
            specs.append(spec)
        else:
            target = SpriteSpec(trajectory="random_walk",
                                speed=rng.uniform(3.0, 5.0),
                                scale_drift=rng.uniform(-0.01, 0.01),
                                spin=rng.uniform(-0.05, 0.05),
                                **common)
            distractors = tuple(
                SpriteSpec(shape=SHAPES[int(rng.integers(3))],
                           texture_seed=int(rng.integers(1 << 30)),
                           width=rng.uniform(20, 40), height=rng.uniform(20, 40),
                           trajectory="linear", speed=rng.uniform(0.5, 2.0),
                           heading=rng.uniform(0, 2 * math.pi),
                           brightness=0.9)
                for _ in range(3))
            occ = OccluderSpec(width=rng.uniform(16, 28),
                               speed=rng.uniform(4, 8),
                               start_x=rng.uniform(0, 160))
            spec = SceneSpec(frame_size=160, num_frames=24, target=target,
                             distractors=distractors, occluder=occ,
                             rng_seed=int(rng.integers(1 << 30)))
            specs.append(spec)
    return specs


def make_dataset(preset: str, seed: int, num: int) -> list[SequenceSample]:
    specs = preset_scenes(preset, seed, num)
    return [generate(s, name=f"{preset}_{seed:04d}_{i:03d}")
            for i, s in enumerate(specs)]


# -- PPM + directory round trip ---------------------------------------------


def write_ppm(path, img: np.ndarray):
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("write_ppm expects uint8 HWC RGB")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", raw)
    if not m:
        raise ValueError(f"{path}: not a binary P6 PPM")
    w, h = int(m.group(1)), int(m.group(2))
    data = raw[m.end():m.end() + w * h * 3]
    if len(data) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def write_dataset(samples: list[SequenceSample], root):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for s in samples:
        seq_dir = root / s.name
        (seq_dir / "frames").mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(s.frames):
            write_ppm(seq_dir / "frames" / f"{i + 1:06d}.ppm", frame)
        with open(seq_dir / "groundtruth.txt", "w") as f:
            for b in s.boxes:
                x, y, w, h = b.ltwh
                f.write(f"{x!r},{y!r},{w!r},{h!r}\n")
        names.append(s.name)
    (root / "list.txt").write_text("".join(n + "\n" for n in names))


def _parse_gt_line(line: str, path, lineno: int) -> BBox:
    parts = line.strip().split(",")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError as e:
        raise ValueError(f"{path}:{lineno}: malformed ground-truth line {line!r}") from e
    return BBox.from_ltwh(x, y, w, h)


def read_dataset(root) -> list[SequenceSample]:
    """Load a dataset directory; a groundtruth.txt with only the first
    line yields an unlabeled-mode sequence."""
    root = Path(root)
    list_file = root / "list.txt"
    if not list_file.exists():
        return []
    samples = []
    for name in list_file.read_text().split():
        seq_dir = root / name
        frame_paths = sorted((seq_dir / "frames").glob("*.ppm"))
        frames = [read_ppm(p) for p in frame_paths]
        gt_path = seq_dir / "groundtruth.txt"
        boxes = []
        for i, line in enumerate(gt_path.read_text().splitlines(), start=1):
            if line.strip():
                boxes.append(_parse_gt_line(line, gt_path, i))
        samples.append(SequenceSample(name, frames, boxes))
    return samples
