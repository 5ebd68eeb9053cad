"""Training losses and their exact gradients.

Each scalar loss has a ``*_grad`` twin returning per-item derivatives with
respect to the predictions; :func:`loss_total` chains them through the head.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import HeadOutputs, PredictorHead, forward


@dataclass(frozen=True)
class LossWeights:
    w_mos: float = 1.0
    w_contrast: float = 0.5
    w_stoi: float = 0.1
    w_snr: float = 0.1
    w_noise: float = 0.1

    def __post_init__(self):
        if self.w_mos <= 0:
            raise ValueError("w_mos must be positive")
        if min(self.w_contrast, self.w_stoi, self.w_snr, self.w_noise) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossConfig:
    mos_loss: str = "gauss"  # or "logcosh"
    tau: float = 0.25
    aux_tau: float = 0.0
    margin: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)


def _logcosh(d):
    a = np.abs(d)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def clipped_logcosh_items(pred, target, tau):
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    active = np.abs(d) > tau
    return np.where(active, _logcosh(d), 0.0), np.where(active, np.tanh(d), 0.0)


def loss_clipped_logcosh(pred, target, tau=0.25) -> float:
    """Mean log-cosh error, zeroed wherever ``|pred - target| <= tau``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return float(np.mean(clipped_logcosh_items(pred, target, tau)[0]))


def gauss_items(mu, logvar, target):
    mu, lv, t = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, target))
    inv = np.exp(-lv)
    r = t - mu
    value = 0.5 * lv + 0.5 * r * r * inv
    return value, -r * inv, 0.5 - 0.5 * r * r * inv


def loss_gauss(mu, logvar, target) -> float:
    """Gaussian negative log-likelihood without the constant term."""
    return float(np.mean(gauss_items(mu, logvar, target)[0]))


def contrastive_with_grad(preds, targets, margin):
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    n = len(p)
    if n < 2:
        return 0.0, np.zeros(n)
    i, j = np.triu_indices(n, k=1)
    e = (p[i] - p[j]) - (t[i] - t[j])
    h = np.abs(e) - margin
    on = h > 0
    value = float(np.sum(np.where(on, h, 0.0)) / len(i))
    s = np.where(on, np.sign(e), 0.0) / len(i)
    g = np.zeros(n)
    np.add.at(g, i, s)
    np.add.at(g, j, -s)
    return value, g


def loss_contrastive(preds, targets, margin=0.1) -> float:
    """Mean over pairs of ``max(0, |(p_i - p_j) - (t_i - t_j)| - margin)``."""
    if len(preds) != len(targets):
        raise ValueError("preds and targets differ in length")
    if len(preds) < 2:
        warnings.warn("contrastive loss needs at least two items; contributing 0", stacklevel=2)
        return 0.0
    return contrastive_with_grad(preds, targets, margin)[0]


def cross_entropy_items(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.arange(len(z))
    value = -logp[idx, labels]
    g = np.exp(logp)
    g[idx, labels] -= 1.0
    return value, g


@dataclass
class BatchTargets:
    """Per-item supervision. NaN (or -1 for ``noise_class``) marks a missing target."""

    mos: np.ndarray
    is_noisy: np.ndarray
    stoi: np.ndarray
    snr: np.ndarray
    noise_class: np.ndarray
    rows: np.ndarray | None = None  # listener-table rows

    @classmethod
    def clean_only(cls, mos, rows=None):
        mos = np.asarray(mos, dtype=np.float64)
        n = len(mos)
        nan = np.full(n, np.nan)
        return cls(mos, np.zeros(n, bool), nan, nan.copy(), -np.ones(n, int), rows)


def _masked_mean(values, grads, mask):
    k = int(mask.sum())
    if k == 0:
        return 0.0, np.zeros_like(values)
    return float(values[mask].sum() / k), np.where(mask, grads, 0.0) / k


def loss_total(head: PredictorHead, pooled, targets: BatchTargets, config: LossConfig):
    """Weighted multi-task loss and exact gradients for every head parameter.

    MOS and contrastive terms use clean items with a MOS target; SNR and noise
    classification use noisy items only; STOI uses any item carrying a target.
    Returns ``(total, grads, parts)``.
    """
    w = config.weights
    out: HeadOutputs = forward(head, pooled, rows=targets.rows)
    n = len(out.mos_mean)
    d_mu = np.zeros(n)
    d_lv = np.zeros(n)
    d_stoi = np.zeros(n)
    d_snr = np.zeros(n)
    d_logits = np.zeros_like(out.noise_logits)
    parts = {}

    mos = np.asarray(targets.mos, dtype=np.float64)
    noisy = np.asarray(targets.is_noisy, dtype=bool)
    m_mos = ~noisy & np.isfinite(mos)
    safe_mos = np.where(m_mos, mos, 0.0)
    if config.mos_loss == "gauss":
        v, g_mu, g_lv = gauss_items(out.mos_mean, out.mos_logvar, safe_mos)
        parts["mos"], g_mu = _masked_mean(v, g_mu, m_mos)
        _, g_lv = _masked_mean(v, g_lv, m_mos)
        d_mu += w.w_mos * g_mu
        d_lv += w.w_mos * g_lv
    elif config.mos_loss == "logcosh":
        v, g = clipped_logcosh_items(out.mos_mean, safe_mos, config.tau)
        parts["mos"], g = _masked_mean(v, g, m_mos)
        d_mu += w.w_mos * g
    else:
        raise ValueError(f"unknown MOS loss {config.mos_loss!r}")

    idx = np.flatnonzero(m_mos)
    parts["contrast"], g = contrastive_with_grad(out.mos_mean[idx], mos[idx], config.margin)
    d_mu[idx] += w.w_contrast * g

    stoi = np.asarray(targets.stoi, dtype=np.float64)
    m = np.isfinite(stoi)
    v, g = clipped_logcosh_items(out.stoi, np.where(m, stoi, 0.0), config.aux_tau)
    parts["stoi"], g = _masked_mean(v, g, m)
    d_stoi += w.w_stoi * g

    snr = np.asarray(targets.snr, dtype=np.float64)
    m = noisy & np.isfinite(snr)
    v, g = clipped_logcosh_items(out.snr, np.where(m, snr, 0.0), config.aux_tau)
    parts["snr"], g = _masked_mean(v, g, m)
    d_snr += w.w_snr * g

    cls = np.asarray(targets.noise_class, dtype=int)
    m = noisy & (cls >= 0)
    if m.any():
        v, g = cross_entropy_items(out.noise_logits[m], cls[m])
        parts["noise"] = float(v.mean())
        d_logits[m] = w.w_noise * g / m.sum()
    else:
        parts["noise"] = 0.0

    total = (w.w_mos * parts["mos"] + w.w_contrast * parts["contrast"] + w.w_stoi * parts["stoi"]
             + w.w_snr * parts["snr"] + w.w_noise * parts["noise"])
    return total, _backward(head, out, d_mu, d_lv, d_stoi, d_snr, d_logits), parts


def _backward(head, out, d_mu, d_lv, d_stoi, d_snr, d_logits):
    p = {k: v.astype(np.float64, copy=False) for k, v in head.params.items()}
    h = out.hidden
    grads = {
        "w_mu": h.T @ d_mu, "b_mu": np.array([d_mu.sum()]),
        "w_lv": h.T @ d_lv, "b_lv": np.array([d_lv.sum()]),
        "w_stoi": h.T @ d_stoi, "b_stoi": np.array([d_stoi.sum()]),
        "w_snr": h.T @ d_snr, "b_snr": np.array([d_snr.sum()]),
        "W_noise": h.T @ d_logits, "b_noise": d_logits.sum(axis=0),
    }
    d_h = (np.outer(d_mu, p["w_mu"]) + np.outer(d_lv, p["w_lv"]) + np.outer(d_stoi, p["w_stoi"])
           + np.outer(d_snr, p["w_snr"]) + d_logits @ p["W_noise"].T)
    d_a = d_h * (out.preact > 0)
    grads["W1"] = out.inputs.T @ d_a
    grads["b1"] = d_a.sum(axis=0)
    if head.has_listener_table:
        d_x = d_a @ p["W1"].T
        g = np.zeros_like(p["listener_table"])
        np.add.at(g, out.rows, d_x[:, head.input_dim:])
        grads["listener_table"] = g
    return grads
