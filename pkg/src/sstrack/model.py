"""Tiny joint-attention tracking network.

Reference and search frames are patch-embedded into one token sequence,
run through a small pre-norm transformer, and three MLP heads read the
search-position tokens back out as a center-score map plus normalized
size and sub-cell offset maps.  The reference box conditions the network
through a learned embedding added to reference tokens whose patch center
falls inside the box.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .boxes import BBox, CropWindow, GLOBAL_FRAME
from .checkpoint import save_checkpoint, load_checkpoint
from .tensor import Tensor

IMG_MEAN = 0.5
IMG_STD = 0.25


@dataclass(frozen=True)
class ModelConfig:
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 4
    num_heads: int = 4
    ref_size: int = 64
    search_size: int = 128
    max_refs: int = 3
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.ref_size % self.patch_size or self.search_size % self.patch_size:
            raise ValueError("ref_size and search_size must be divisible by patch_size")
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")

    @property
    def ref_tokens(self) -> int:
        return (self.ref_size // self.patch_size) ** 2

    @property
    def search_tokens(self) -> int:
        return (self.search_size // self.patch_size) ** 2

    @property
    def grid(self) -> tuple[int, int]:
        n = self.search_size // self.patch_size
        return (n, n)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "ModelConfig":
        return cls(**json.loads(s))


@dataclass
class PredictionMap:
    """Raw head outputs over the search grid, all kept in the graph."""

    score: Tensor        # (H', W') in [0, 1]
    size: Tensor         # (H', W', 2) normalized (w, h)
    offset: Tensor       # (H', W', 2) sub-cell offsets in [0, 1)
    search_tokens: Tensor  # (H'*W', D) final normalized search tokens
    patch_size: int


@dataclass
class SearchView:
    """A search frame plus the window that produced it.

    ``target_box`` (crop-frame coordinates) is populated by callers that
    know the true box — the loss path and the box-oracle model read it;
    the learned model never does.
    """

    image: np.ndarray
    window: CropWindow
    frame_index: int = 0
    target_box: BBox | None = None


class TargetContext:
    """Ordered (reference tokens, reference box) pairs, FIFO keeping the
    first (initial-frame) entry when full."""

    def __init__(self, max_refs: int):
        self.max_refs = int(max_refs)
        self.entries: list[tuple[Tensor, BBox]] = []

    def add(self, tokens: Tensor, box: BBox):
        self.entries.append((tokens, box))
        if len(self.entries) > self.max_refs:
            del self.entries[1]

    def __len__(self):
        return len(self.entries)


def _trunc_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    out = rng.standard_normal(shape) * std
    for _ in range(8):
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            break
        out[bad] = rng.standard_normal(bad.sum()) * std
    return np.clip(out, -2.0 * std, 2.0 * std).astype(dtype)


class TrackerModel:
    """Parameter set plus forward pass; see module docstring."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(np.random.PCG64(seed))
        d = cfg.embed_dim
        p = cfg.patch_size

        def add_param(name, shape, init="trunc", std=0.02):
            if init == "trunc":
                data = _trunc_normal(rng, shape, std, dtype)
            elif init == "zeros":
                data = np.zeros(shape, dtype=dtype)
            elif init == "ones":
                data = np.ones(shape, dtype=dtype)
            else:
                data = np.full(shape, init, dtype=dtype)
            t = Tensor(data, requires_grad=True)
            self.params[name] = t
            return t

        add_param("embed.proj.w", (p * p * 3, d))
        add_param("embed.proj.b", (d,), "zeros")
        add_param("embed.pos.ref", (cfg.ref_tokens, d))
        add_param("embed.pos.search", (cfg.search_tokens, d))
        add_param("embed.seg.ref", (d,))
        add_param("embed.seg.search", (d,))
        add_param("embed.box", (d,))
        hidden = int(d * cfg.mlp_ratio)
        for i in range(cfg.depth):
            pre = f"blocks.{i}."
            add_param(pre + "ln1.g", (d,), "ones")
            add_param(pre + "ln1.b", (d,), "zeros")
            add_param(pre + "attn.wq", (d, d))
            add_param(pre + "attn.wk", (d, d))
            add_param(pre + "attn.wv", (d, d))
            add_param(pre + "attn.wo", (d, d))
            add_param(pre + "attn.bq", (d,), "zeros")
            add_param(pre + "attn.bk", (d,), "zeros")
            add_param(pre + "attn.bv", (d,), "zeros")
            add_param(pre + "attn.bo", (d,), "zeros")
            add_param(pre + "ln2.g", (d,), "ones")
            add_param(pre + "ln2.b", (d,), "zeros")
            add_param(pre + "mlp.w1", (d, hidden))
            add_param(pre + "mlp.b1", (hidden,), "zeros")
            add_param(pre + "mlp.w2", (hidden, d))
            add_param(pre + "mlp.b2", (d,), "zeros")
        add_param("final_ln.g", (d,), "ones")
        add_param("final_ln.b", (d,), "zeros")
        for head, width in (("score", 1), ("size", 2), ("offset", 2)):
            add_param(f"head.{head}.w1", (d, d))
            add_param(f"head.{head}.b1", (d,), "zeros")
            add_param(f"head.{head}.w2", (d, width))
            # start the score head pessimistic so early maps are near-empty
            add_param(f"head.{head}.b2", (width,),
                      "zeros" if head != "score" else -2.0)

    # -- embedding ---------------------------------------------------------

    def _patchify(self, img: np.ndarray, size: int) -> np.ndarray:
        if img.shape != (size, size, 3):
            raise ValueError(f"embed: expected ({size}, {size}, 3) image, got {img.shape}")
        p = self.cfg.patch_size
        n = size // p
        x = (img.astype(self.dtype) - IMG_MEAN) / IMG_STD
        x = x.reshape(n, p, n, p, 3).transpose(0, 2, 1, 3, 4).reshape(n * n, p * p * 3)
        return x

    def embed_frame(self, img: np.ndarray, role: str) -> Tensor:
        """Patch-embed a ref or search frame; adds positional and segment terms."""
        size = self.cfg.ref_size if role == "ref" else self.cfg.search_size
        patches = Tensor(self._patchify(img, size))
        tok = T.matmul(patches, self.params["embed.proj.w"]) + self.params["embed.proj.b"]
        tok = tok + self.params[f"embed.pos.{role}"]
        tok = tok + self.params[f"embed.seg.{role}"]
        return tok

    def embed_reference(self, img: np.ndarray, box: BBox) -> Tensor:
        """Reference embedding with the inside-box token added."""
        tok = self.embed_frame(img, "ref")
        p = self.cfg.patch_size
        n = self.cfg.ref_size // p
        centers = (np.arange(n) + 0.5) * p
        gx, gy = np.meshgrid(centers, centers)
        x1, y1, x2, y2 = box.xyxy
        inside = ((gx >= x1) & (gx <= x2) & (gy >= y1) & (gy <= y2))
        mask = Tensor(inside.reshape(-1, 1).astype(self.dtype))
        bt = T.reshape(self.params["embed.box"], (1, self.cfg.embed_dim))
        return tok + T.matmul(mask, bt)

    def make_context(self, refs: list[tuple[np.ndarray, BBox]]) -> TargetContext:
        ctx = TargetContext(self.cfg.max_refs)
        for img, box in refs:
            ctx.add(self.embed_reference(img, box), box)
        return ctx

    # -- transformer ---------------------------------------------------------

    def _ln(self, x: Tensor, prefix: str) -> Tensor:
        return T.layer_norm(x) * self.params[prefix + ".g"] + self.params[prefix + ".b"]

    def _attention(self, x: Tensor, prefix: str) -> Tensor:
        cfg = self.cfg
        L = x.shape[0]
        h = cfg.num_heads
        hd = cfg.embed_dim // h
        def proj(name):
            return T.matmul(x, self.params[prefix + ".w" + name]) + self.params[prefix + ".b" + name]
        def split(t):
            return T.transpose(T.reshape(t, (L, h, hd)), (1, 0, 2))
        q, k, v = split(proj("q")), split(proj("k")), split(proj("v"))
        scores = T.matmul(q, T.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(hd))
        attn = T.softmax(scores, axis=-1)
        out = T.reshape(T.transpose(T.matmul(attn, v), (1, 0, 2)), (L, cfg.embed_dim))
        return T.matmul(out, self.params[prefix + ".wo"]) + self.params[prefix + ".bo"]

    def _mlp(self, x: Tensor, prefix: str) -> Tensor:
        hcur = T.gelu(T.matmul(x, self.params[prefix + ".w1"]) + self.params[prefix + ".b1"])
        return T.matmul(hcur, self.params[prefix + ".w2"]) + self.params[prefix + ".b2"]

    def _head(self, x: Tensor, name: str) -> Tensor:
        pre = f"head.{name}."
        hcur = T.gelu(T.matmul(x, self.params[pre + "w1"]) + self.params[pre + "b1"])
        return T.matmul(hcur, self.params[pre + "w2"])

    def forward(self, ctx: TargetContext, view: SearchView) -> PredictionMap:
        """Joint encoding of all reference tokens plus one search frame."""
        if len(ctx) == 0:
            raise ValueError("forward: empty target context")
        if len(ctx) > self.cfg.max_refs:
            raise ValueError(f"forward: {len(ctx)} references exceeds max_refs={self.cfg.max_refs}")
        search_tok = self.embed_frame(view.image, "search")
        x = T.concat([tok for tok, _ in ctx.entries] + [search_tok], axis=0)
        for i in range(self.cfg.depth):
            pre = f"blocks.{i}."
            x = x + self._attention(self._ln(x, pre + "ln1"), pre + "attn")
            x = x + self._mlp(self._ln(x, pre + "ln2"), pre + "mlp")
        ns = self.cfg.search_tokens
        xs = T.gather(x, np.arange(x.shape[0] - ns, x.shape[0]), axis=0)
        xs = self._ln(xs, "final_ln")
        gh, gw = self.cfg.grid
        score = T.reshape(T.sigmoid(self._head(xs, "score")), (gh, gw))
        size = T.reshape(T.sigmoid(self._head(xs, "size")), (gh, gw, 2))
        offset = T.reshape(T.sigmoid(self._head(xs, "offset")), (gh, gw, 2))
        return PredictionMap(score, size, offset, xs, self.cfg.patch_size)

    # -- persistence -----------------------------------------------------

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    def save(self, path, extra_meta: dict | None = None,
             extra_tensors: dict[str, np.ndarray] | None = None):
        meta = {"model_config": self.cfg.to_json()}
        if extra_meta:
            meta.update(extra_meta)
        tensors = dict(self.arrays())
        if extra_tensors:
            tensors.update(extra_tensors)
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path, dtype=np.float32) -> tuple["TrackerModel", dict[str, np.ndarray], dict]:
        """Returns (model, non-parameter tensors, meta)."""
        tensors, meta = load_checkpoint(path)
        cfg = ModelConfig.from_json(meta["model_config"])
        model = cls(cfg, seed=0, dtype=dtype)
        rest = {}
        for name, arr in tensors.items():
            if name in model.params:
                model.params[name].data = arr.astype(dtype)
            else:
                rest[name] = arr
        return model, rest, meta


def decode(pm: PredictionMap, frame_size: int, frame: str = GLOBAL_FRAME) -> BBox:
    """Argmax-cell decode: center = (cell + offset) * patch, size in pixels.

    Ties break to the smallest row-major index; an all-zero map therefore
    decodes to cell (0, 0) rather than an EMPTY box.
    """
    score = pm.score.data
    gh, gw = score.shape
    flat = int(np.argmax(score))
    r, c = divmod(flat, gw)
    ox, oy = (float(v) for v in pm.offset.data[r, c])
    sw, sh = (float(v) for v in pm.size.data[r, c])
    cx = (c + ox) * pm.patch_size
    cy = (r + oy) * pm.patch_size
    return BBox(cx, cy, sw * frame_size, sh * frame_size, frame)


class BoxOracleModel:
    """Model stand-in that reads ``view.target_box`` and emits the map that
    decodes exactly back to it (one-hot score, exact size/offset).

    Used to verify coordinate plumbing end to end; it never looks at pixels.
    """

    def __init__(self, cfg: ModelConfig, dtype=np.float64):
        self.cfg = cfg
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}

    def make_context(self, refs):
        ctx = TargetContext(self.cfg.max_refs)
        for _, box in refs:
            ctx.add(Tensor(np.zeros((1, 1), dtype=self.dtype)), box)
        return ctx

    def embed_reference(self, img, box):
        return Tensor(np.zeros((1, 1), dtype=self.dtype))

    def forward(self, ctx, view: SearchView) -> PredictionMap:
        if view.target_box is None:
            raise ValueError("BoxOracleModel needs view.target_box")
        b = view.target_box
        gh, gw = self.cfg.grid
        p = self.cfg.patch_size
        frame = self.cfg.search_size
        score = np.zeros((gh, gw), dtype=self.dtype)
        size = np.zeros((gh, gw, 2), dtype=self.dtype)
        offset = np.zeros((gh, gw, 2), dtype=self.dtype)
        c = min(max(int(b.cx // p), 0), gw - 1)
        r = min(max(int(b.cy // p), 0), gh - 1)
        score[r, c] = 1.0
        size[r, c] = (b.w / frame, b.h / frame)
        offset[r, c] = (b.cx / p - c, b.cy / p - r)
        tokens = np.zeros((gh * gw, 1), dtype=self.dtype)
        return PredictionMap(Tensor(score), Tensor(size), Tensor(offset),
                             Tensor(tokens), p)
