"""
In-place parameter updates: SGD with momentum (test time) and AdamW (pretraining).
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import ContractError
from .tensor import Parameter


def _check(params: Sequence[Parameter], grads: Sequence[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.data.shape != np.shape(g):
            raise ContractError(f"gradient shape {np.shape(g)} != parameter '{p.name}' {p.data.shape}")


def sgd_momentum_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray],
    state: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """buf = momentum * buf + g; p -= lr * buf. ``state`` holds buffers by name."""
    _check(params, grads)
    for p, g in zip(params, grads):
        buf = state.get(p.name)
        buf = np.array(g, dtype=np.float64) if buf is None else momentum * buf + g
        state[p.name] = buf
        p.value.data -= lr * buf


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 0.0,
    eps: float = 1e-8,
) -> None:
    """Adam with bias correction and decoupled weight decay."""
    _check(params, grads)
    beta1, beta2 = betas
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for p, g in zip(params, grads):
        m = state.m.get(p.name, np.zeros_like(p.data))
        v = state.v.get(p.name, np.zeros_like(p.data))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[p.name], state.v[p.name] = m, v
        if weight_decay:
            p.value.data -= lr * weight_decay * p.value.data
        p.value.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def collect_grads(params: Sequence[Parameter]) -> list[np.ndarray]:
    return [p.grad for p in params]


def grad_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
