"""AdamW and Adagrad updates over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step aborted")
        self.param_name = name


def _check_finite(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: dict,
               lr: float, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> dict:
    """One AdamW update in place. ``state`` holds ``t`` plus per-name ``m``/``v`` buffers."""
    _check_finite(grads)
    b1, b2 = betas
    t = state.get("t", 0) + 1
    state["t"] = t
    m_all = state.setdefault("m", {})
    v_all = state.setdefault("v", {})
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = m_all.get(name)
        if m is None:
            m = m_all[name] = np.zeros_like(p.data)
            v_all[name] = np.zeros_like(p.data)
        v = v_all[name]
        if m.shape != p.shape:
            raise ValueError(f"optimizer state for {name!r} has shape {m.shape}, parameter has {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def adagrad_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: dict,
                 lr: float, eps: float = 1e-10, initial_accumulator: float = 0.0) -> dict:
    """One Adagrad update in place; the squared-gradient sum lives in ``state['acc']``."""
    _check_finite(grads)
    acc_all = state.setdefault("acc", {})
    state["t"] = state.get("t", 0) + 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        acc = acc_all.get(name)
        if acc is None:
            acc = acc_all[name] = np.full_like(p.data, initial_accumulator)
        if acc.shape != p.shape:
            raise ValueError(f"optimizer state for {name!r} has shape {acc.shape}, parameter has {p.shape}")
        acc += g * g
        p.data -= lr * g / (np.sqrt(acc) + eps)
    return state


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values() if g is not None)))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            if g is not None:
                g *= scale
    return total


@dataclass
class AdamW:
    params: dict[str, Tensor]
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    state: dict = field(default_factory=dict)

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        adamw_step(self.params, grads, self.state, self.lr if lr is None else lr,
                   self.betas, self.eps, self.weight_decay)


@dataclass
class Adagrad:
    params: dict[str, Tensor]
    lr: float = 1e-2
    eps: float = 1e-10
    state: dict = field(default_factory=dict)

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        adagrad_step(self.params, grads, self.state, self.lr if lr is None else lr, self.eps)


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.grad for name, p in params.items() if p.grad is not None}


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
