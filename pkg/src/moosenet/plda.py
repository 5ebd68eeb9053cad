"""Two-covariance PLDA over MOS bins, scored with posterior-predictive likelihoods.

MNPL model file: ``b"MNPL"``, u32 version, u32 F, u32 N, then little-endian
float64 arrays: mean (F), between-class cov (F*F), within-class cov (F*F),
N per-bin blocks of (count, mean (F)), prior (N); finally a u32 byte length
and the UTF-8 bin table CSV (``index,start,end,center,count``).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .binning import BinSpec, expected_mos
from .errors import BadMagic, MissingBin, NotFitted, SingularWithinClass, TooFewSamples, TruncatedFile

PLDA_MAGIC = b"MNPL"
PLDA_VERSION = 1
_HEADER = struct.Struct("<4sIII")
REG_SCALE = 1e-6
REG_FLOOR = 1e-10
COND_LIMIT = 1e-12


@dataclass
class PldaModel:
    mean: np.ndarray
    between: np.ndarray
    within: np.ndarray
    counts: np.ndarray
    class_means: np.ndarray  # (N, F)
    spec: BinSpec
    prior: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def feature_dim(self) -> int:
        return len(self.mean)

    @property
    def n_classes(self) -> int:
        return len(self.counts)

    def predictive(self):
        """Per-class predictive means (N, F) and shared-structure Cholesky factors and log-dets."""
        if "pred" not in self._cache:
            mus, chols, logdets = [], [], []
            for n_i, xbar in zip(self.counts, self.class_means):
                # posterior of the class centre given n_i samples, written without inverting Phi_b
                s = self.between + self.within / n_i
                k = np.linalg.solve(s, self.between).T  # Phi_b S^-1
                mu = self.mean + k @ (xbar - self.mean)
                post = self.between - k @ self.between
                cov = post + self.within
                cov = (cov + cov.T) / 2
                c = np.linalg.cholesky(cov)
                mus.append(mu)
                chols.append(c)
                logdets.append(2.0 * np.sum(np.log(np.diag(c))))
            self._cache["pred"] = (np.array(mus), np.array(chols), np.array(logdets))
        return self._cache["pred"]


def fit_plda(features, labels, spec: BinSpec, min_count=1) -> PldaModel:
    """Moment estimates of the between/within covariances from labelled features."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    n, f = x.shape
    k = spec.n_bins
    counts = np.bincount(y, minlength=k)
    if len(counts) > k:
        raise ValueError(f"labels reference bin {len(counts) - 1} beyond {k} bins")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise MissingBin(f"no features for bins {missing.tolist()}")
    if counts.min() < min_count:
        raise TooFewSamples(f"bin {int(counts.argmin())} has {counts.min()} samples, need {min_count}")
    mean = x.mean(axis=0)
    class_means = np.array([x[y == i].mean(axis=0) for i in range(k)])
    resid = x - class_means[y]
    dof = n - k
    within = resid.T @ resid / dof if dof > 0 else np.zeros((f, f))
    # an isotropic ridge is not affine-invariant, so only add it when Phi_w is (near) singular
    ev = np.linalg.eigvalsh(within)
    if ev[0] <= COND_LIMIT * max(ev[-1], 0.0) or ev[0] <= 0.0:
        eps = max(REG_SCALE * np.trace(within) / f, REG_FLOOR)
        within = within + eps * np.eye(f)
    try:
        np.linalg.cholesky(within)
    except np.linalg.LinAlgError:
        raise SingularWithinClass("within-class covariance not positive definite") from None
    centred = class_means - mean
    between = centred.T @ centred / k - within * np.mean(1.0 / counts)
    between = (between + between.T) / 2
    # floor eigenvalues relative to Phi_w (generalized problem) so the fit stays affine-equivariant
    w, v = scipy.linalg.eigh(between, within)
    wv = within @ v
    between = (wv * np.maximum(w, 0.0)) @ wv.T
    between = (between + between.T) / 2
    prior = np.full(k, 1.0 / k)
    return PldaModel(mean, between, within, counts.astype(np.float64), class_means, spec, prior)


def log_likelihoods(model: PldaModel, x) -> np.ndarray:
    """Log posterior-predictive density of each class; x is (F,) or (B, F)."""
    if model is None:
        raise NotFitted("PLDA model has not been fitted")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mus, chols, logdets = model.predictive()
    out = np.empty((len(x), model.n_classes))
    f = model.feature_dim
    for i in range(model.n_classes):
        z = np.linalg.solve(chols[i], (x - mus[i]).T)
        out[:, i] = -0.5 * (np.sum(z * z, axis=0) + logdets[i] + f * np.log(2 * np.pi))
    return out


def posterior(model: PldaModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    ll = log_likelihoods(model, x) + np.log(model.prior)
    ll -= ll.max(axis=1, keepdims=True)
    p = np.exp(ll)
    p /= p.sum(axis=1, keepdims=True)
    return p[0] if x.ndim == 1 else p


def predict_mos_plda(model: PldaModel, x):
    """Posterior-weighted bin centre; scalar for one vector, array for a batch."""
    p = posterior(model, x)
    if p.ndim == 1:
        return expected_mos(model.spec, p)
    return np.array([expected_mos(model.spec, row) for row in p])


def predictive_variance(model: PldaModel, x):
    p = np.atleast_2d(posterior(model, x))
    c = model.spec.centers
    m = p @ c
    v = p @ (c * c) - m * m
    return np.maximum(v, 0.0) if np.ndim(x) > 1 else float(max(v[0], 0.0))


def save_plda(model: PldaModel, path) -> None:
    f, k = model.feature_dim, model.n_classes
    spec_bytes = model.spec.to_csv().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PLDA_MAGIC, PLDA_VERSION, f, k))
        for arr in (model.mean, model.between, model.within):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for n_i, xbar in zip(model.counts, model.class_means):
            fh.write(np.array([n_i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(xbar, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.prior, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(spec_bytes)))
        fh.write(spec_bytes)


def load_plda(path) -> PldaModel:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != PLDA_MAGIC:
        raise BadMagic(f"{path}: not an MNPL model file")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, version, f, k = _HEADER.unpack_from(raw)
    if version != PLDA_VERSION:
        raise BadMagic(f"{path}: PLDA model version {version}, this build reads {PLDA_VERSION}")
    off = _HEADER.size

    def take(n):
        nonlocal off
        if off + 8 * n > len(raw):
            raise TruncatedFile(f"{path}: truncated")
        a = np.frombuffer(raw, "<f8", n, off).astype(np.float64)
        off += 8 * n
        return a

    mean = take(f)
    between = take(f * f).reshape(f, f)
    within = take(f * f).reshape(f, f)
    counts, means = [], []
    for _ in range(k):
        counts.append(take(1)[0])
        means.append(take(f))
    prior = take(k)
    if off + 4 > len(raw):
        raise TruncatedFile(f"{path}: missing bin table")
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    if off + n > len(raw):
        raise TruncatedFile(f"{path}: truncated bin table")
    spec = BinSpec.from_csv(raw[off:off + n].decode("utf-8"))
    return PldaModel(mean, between, within, np.array(counts), np.array(means), spec, prior)
