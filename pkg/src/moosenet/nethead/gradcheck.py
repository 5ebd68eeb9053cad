"""Central finite-difference check of :func:`loss_total` gradients."""
from __future__ import annotations

import numpy as np

from .losses import BatchTargets, LossConfig, LossWeights, loss_total
from .model import init_head

FD_STEP = 1e-5
TOLERANCE = 1e-4


def numeric_grad(head, x, targets, config, name, h=FD_STEP) -> np.ndarray:
    w = head.params[name]
    g = np.zeros_like(w)
    flat = w.reshape(-1)
    out = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = loss_total(head, x, targets, config)[0]
        flat[k] = orig - h
        down = loss_total(head, x, targets, config)[0]
        flat[k] = orig
        out[k] = (up - down) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def random_problem(seed, max_d=4, max_h=3, max_c=3, batch=6):
    """A tiny float64 head with random targets covering every loss term."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, max_d + 1))
    hdim = int(rng.integers(1, max_h + 1))
    c = int(rng.integers(1, max_c + 1))
    ld = bool(rng.integers(0, 2))
    listeners = [f"l{i}" for i in range(int(rng.integers(1, 4)))] if ld else None
    head = init_head(d, rng, hidden_dim=hdim, noise_classes=[f"n{i}" for i in range(c)],
                     listeners=listeners, listener_dim=int(rng.integers(1, 3)), dtype=np.float64)
    for v in head.params.values():
        v += rng.normal(0.0, 0.3, v.shape)
    head.params["b1"] += 0.5  # keep most units active
    x = rng.normal(0.0, 1.0, (batch, d))
    noisy = np.arange(batch) % 2 == 1
    mos = np.where(noisy, np.nan, rng.uniform(1, 5, batch))
    stoi = np.where(rng.random(batch) < 0.7, rng.uniform(0, 1, batch), np.nan)
    snr = np.where(noisy, rng.uniform(10, 20, batch), np.nan)
    cls = np.where(noisy, rng.integers(0, c, batch), -1)
    rows = rng.integers(0, len(listeners) + 1, batch) if ld else None
    targets = BatchTargets(mos, noisy, stoi, snr, cls, rows)
    config = LossConfig(
        mos_loss="gauss" if seed % 2 == 0 else "logcosh",
        tau=float(rng.uniform(0, 0.3)), aux_tau=float(rng.uniform(0, 0.1)),
        margin=float(rng.uniform(0, 0.2)),
        weights=LossWeights(*rng.uniform(0.1, 1.0, 5)),
    )
    return head, x, targets, config


def check_seed(seed) -> dict[str, float]:
    """Relative error of every parameter gradient for one random problem."""
    head, x, targets, config = random_problem(seed)
    _, grads, _ = loss_total(head, x, targets, config)
    return {name: rel_error(grads[name], numeric_grad(head, x, targets, config, name))
            for name in head.params}


def run_gradcheck(seeds=range(20), tol=TOLERANCE):
    """Returns ``(ok, worst_error, per_seed_errors)``."""
    per_seed = {s: check_seed(s) for s in seeds}
    worst = max(max(e.values()) for e in per_seed.values())
    return worst < tol, worst, per_seed
