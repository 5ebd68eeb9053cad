"""LAMB optimizer and the Noam warmup schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BASE_LR = 1e-3
WARMUP_STEPS = 1500
WEIGHT_DECAY = 1e-4


def noam_lr(step, base_lr=BASE_LR, warmup=WARMUP_STEPS) -> float:
    """Linear warmup then inverse-sqrt decay, peaking at ``base_lr`` when ``step == warmup``."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return base_lr * warmup ** 0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class LambState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def lamb_step(params, grads, state: LambState, lr, weight_decay=WEIGHT_DECAY,
              betas=(0.9, 0.999), eps=1e-6, max_trust=10.0) -> dict[str, float]:
    """One LAMB update, in place; each parameter array is its own group.

    Returns the trust ratio applied to each parameter.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    ratios = {}
    for name, w in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {w.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(w.shape)
            state.v[name] = np.zeros(w.shape)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w64 = w.astype(np.float64)
        u = m_hat / (np.sqrt(v_hat) + eps) + weight_decay * w64
        w_norm = np.linalg.norm(w64)
        u_norm = np.linalg.norm(u)
        phi = 1.0 if w_norm == 0 or u_norm == 0 else float(np.clip(w_norm / u_norm, 0.0, max_trust))
        w[...] = (w64 - lr * phi * u).astype(w.dtype)
        ratios[name] = phi
    return ratios
