"""PSNR, Frechet distance between Gaussian statistics, and an expression-space distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import EXPRESSION, ParamSequence


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gaussian_stats(features) -> GaussianStats:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an N x d matrix with N >= 2")
    mu = x.mean(axis=0)
    d = x - mu
    cov = d.T @ d / (x.shape[0] - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T))


def _psd_sqrt(cov: np.ndarray, what: str) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    top = max(float(np.max(np.abs(w))), 1.0)
    if w.min() < -1e-9 * top:
        raise ValueError(f"{what} covariance is not positive semi-definite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def trace_sqrt_product(cov1: np.ndarray, cov2: np.ndarray) -> float:
    """``Tr((cov1 cov2)^(1/2))`` via the symmetric form ``sqrt(C1) C2 sqrt(C1)``."""
    s1 = _psd_sqrt(cov1, "first")
    _psd_sqrt(cov2, "second")
    m = s1 @ cov2 @ s1
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    top = float(w.max()) if w.size else 0.0
    w = np.where(w < 1e-10 * top, 0.0, w) if top > 0 else np.zeros_like(w)
    return float(np.sum(np.sqrt(w)))


def frechet_distance(p: GaussianStats, q: GaussianStats) -> float:
    """``|mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2))``, clamped at 0."""
    if p.mean.shape != q.mean.shape or p.cov.shape != q.cov.shape:
        raise ValueError("dimension mismatch")
    dm = p.mean - q.mean
    value = float(dm @ dm) + float(np.trace(p.cov) + np.trace(q.cov)) - 2.0 * trace_sqrt_product(p.cov, q.cov)
    return max(value, 0.0)


def exp_distance(pred, truth) -> float:
    """Mean per-frame Euclidean distance of expression coefficients (ExpFD proxy)."""
    p = pred.values if isinstance(pred, ParamSequence) else np.asarray(pred, dtype=np.float64)
    q = truth.values if isinstance(truth, ParamSequence) else np.asarray(truth, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.mean(np.linalg.norm(p[:, EXPRESSION] - q[:, EXPRESSION], axis=1)))


def frame_embedding(frames: np.ndarray, cells: int = 4) -> np.ndarray:
    """Stand-in frame descriptor: per-channel means over a ``cells x cells`` grid.

    Used for the Frechet distance between frame sets in place of an Inception
    embedding.
    """
    f = np.asarray(frames, dtype=np.float64)
    n, h, w, c = f.shape
    ys = np.linspace(0, h, cells + 1).astype(int)
    xs = np.linspace(0, w, cells + 1).astype(int)
    out = np.empty((n, cells, cells, c))
    for i in range(cells):
        for j in range(cells):
            out[:, i, j] = f[:, ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean(axis=(1, 2))
    return out.reshape(n, -1)


@dataclass
class MetricsReport:
    """Named scalar results; ``None`` marks a metric that was not computed."""

    psnr: float | None = None
    frechet: float | None = None
    expfd: float | None = None
    frechet_space: str = ""

    FIELDS = ("psnr", "frechet", "expfd")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    @staticmethod
    def _fmt(v) -> str:
        if v is None:
            return "nan"
        if math.isinf(v):
            return "inf"
        return repr(float(v))

    def to_text(self) -> str:
        lines = [f"{k}={self._fmt(v)}" for k, v in self.as_dict().items()]
        if self.frechet_space:
            lines.append(f"frechet_space={self.frechet_space}")
        lines.append("expfd_space=expression_coefficients_proxy")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        vals = {}
        for k in cls.FIELDS:
            s = kv.get(k, "nan")
            vals[k] = None if s == "nan" else float(s)
        return cls(**vals, frechet_space=kv.get("frechet_space", ""))

    def csv_header(self) -> str:
        return "name," + ",".join(self.FIELDS)

    def csv_row(self, name: str) -> str:
        return ",".join([name] + [self._fmt(v) for v in self.as_dict().values()])


def evaluate(frames_a=None, frames_b=None, params_a=None, params_b=None) -> MetricsReport:
    """Compare two frame sets and/or two parameter sequences.

    PSNR is the mean over frames (infinite only if every frame matches). The
    Frechet distance uses frame embeddings when frames are given, otherwise the
    73-dim parameter vectors.
    """
    report = MetricsReport()
    if frames_a is not None and frames_b is not None:
        fa = np.asarray(frames_a, dtype=np.float64)
        fb = np.asarray(frames_b, dtype=np.float64)
        if fa.shape != fb.shape:
            raise ValueError(f"frame sets differ in shape: {fa.shape} vs {fb.shape}")
        values = [psnr(x, y) for x, y in zip(fa, fb)]
        report.psnr = math.inf if all(math.isinf(v) for v in values) else float(
            np.mean([v for v in values if not math.isinf(v)]))
        if len(fa) >= 2:
            report.frechet = frechet_distance(gaussian_stats(frame_embedding(fa)), gaussian_stats(frame_embedding(fb)))
            report.frechet_space = "frame_grid_means"
    if params_a is not None and params_b is not None:
        pa = params_a.values if isinstance(params_a, ParamSequence) else np.asarray(params_a)
        pb = params_b.values if isinstance(params_b, ParamSequence) else np.asarray(params_b)
        report.expfd = exp_distance(pa, pb)
        if report.frechet is None and len(pa) >= 2 and len(pb) >= 2:
            report.frechet = frechet_distance(gaussian_stats(pa), gaussian_stats(pb))
            report.frechet_space = "head_params"
    return report
