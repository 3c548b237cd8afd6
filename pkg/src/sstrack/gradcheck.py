"""Central finite-difference gradient oracle.

The checks rebuild the computation from scratch per probe, so they stay
independent of the backward rules they verify.  Run them in float64:
with h = 1e-5 the truncation error sits far below the tolerances used in
the test suite.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def analytic_gradients(f, leaves: list[Tensor]) -> list[np.ndarray]:
    for leaf in leaves:
        leaf.zero_grad()
    out = f()
    out.backward()
    return [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]


def fd_gradients(f, leaves: list[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Full central-difference gradient of scalar f() w.r.t. each leaf."""
    grads = []
    for leaf in leaves:
        flat = leaf.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(leaf.shape))
    return grads


def fd_gradients_sampled(f, leaves: list[Tensor], rng: np.random.Generator,
                         n_per_leaf: int = 6, h: float = 1e-5):
    """Probe a random subset of coordinates per leaf; returns
    (per-leaf index arrays, per-leaf fd values)."""
    all_idx, all_vals = [], []
    for leaf in leaves:
        flat = leaf.data.reshape(-1)
        n = min(n_per_leaf, flat.size)
        idx = rng.choice(flat.size, size=n, replace=False)
        vals = np.zeros(n, dtype=np.float64)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            vals[j] = (fp - fm) / (2.0 * h)
        all_idx.append(idx)
        all_vals.append(vals)
    return all_idx, all_vals


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference over the joint max magnitude (>= 1e-8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-8)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def check_gradients(f, leaves: list[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between backward() and finite differences."""
    ana = analytic_gradients(f, leaves)
    fd = fd_gradients(f, leaves, h=h)
    return max(rel_error(a, g) for a, g in zip(ana, fd))


def check_gradients_sampled(f, leaves: list[Tensor], rng: np.random.Generator,
                            n_per_leaf: int = 6, h: float = 1e-5) -> float:
    """Relative error over the sampled coordinates of the full gradient
    vector (one scale across all leaves, as for an end-to-end check)."""
    ana = analytic_gradients(f, leaves)
    idx, fd = fd_gradients_sampled(f, leaves, rng, n_per_leaf=n_per_leaf, h=h)
    a_all = np.concatenate([a.reshape(-1)[ii] for a, ii in zip(ana, idx)])
    fd_all = np.concatenate(fd)
    return rel_error(a_all, fd_all)
