"""Adam with decoupled weight decay, with separate backbone / head rates."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class OptimizerError(RuntimeError):
    """Raised when an update cannot be applied (e.g. non-finite gradients)."""


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    Parameters whose name starts with a prefix in ``head_prefixes`` use
    ``lr_heads``; everything else uses ``lr_backbone``.  Weight decay is
    applied directly to the parameter, scaled by the effective learning
    rate, never mixed into the moment estimates.
    """

    def __init__(self, params: dict[str, Tensor], lr_backbone: float = 1e-3,
                 lr_heads: float | None = None, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4,
                 head_prefixes: tuple[str, ...] = ("head.",)):
        self.params = dict(params)
        self.lr_backbone = float(lr_backbone)
        self.lr_heads = float(lr_heads) if lr_heads is not None else float(lr_backbone)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.head_prefixes = tuple(head_prefixes)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def _lr_for(self, name: str) -> float:
        if any(name.startswith(pfx) for pfx in self.head_prefixes):
            return self.lr_heads
        return self.lr_backbone

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr_scale: float = 1.0):
        """Apply one update from the accumulated gradients.

        ``lr_scale`` multiplies both group rates (used by the epoch-drop
        schedule).  Parameters without a gradient are skipped.
        """
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise OptimizerError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            lr = self._lr_for(name) * lr_scale
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= (lr * (update + self.weight_decay * p.data)).astype(p.dtype, copy=False)

    # -- checkpoint support ----------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int):
        for name in self.params:
            self.m[name] = arrays[f"opt.m.{name}"].astype(self.m[name].dtype)
            self.v[name] = arrays[f"opt.v.{name}"].astype(self.v[name].dtype)
        self.step_count = int(step_count)
