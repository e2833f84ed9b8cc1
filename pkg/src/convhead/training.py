"""Losses, gradients, AdamW, cosine schedule and the clip-sampling training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import driver as drv
from .params import CROP, EXPRESSION, PARAM_DIM, POSE, ParamSequence

HISTORY_COLUMNS = ("step", "lr", "loss_gen", "loss_mot", "loss_total")


@dataclass(frozen=True)
class TrainConfig:
    clip_length: int = 90
    batch_size: int = 128
    steps: int = 2000
    lr_max: float = 5e-3
    lr_min: float = 1e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    snapshot_every: int = 500

    def __post_init__(self):
        if not self.lr_max >= self.lr_min > 0:
            raise ValueError("need lr_max >= lr_min > 0")
        if self.clip_length < 2:
            raise ValueError("clip_length must be >= 2")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("invalid batch_size or steps")


def _values(seq) -> np.ndarray:
    return seq.values if isinstance(seq, ParamSequence) else np.asarray(seq, dtype=np.float64)


def _unit_rows(e: np.ndarray):
    n = np.sqrt(np.sum(e * e, axis=-1))
    safe = np.where(n > 0, n, 1.0)
    return n, np.where((n > 0)[..., None], e / safe[..., None], 0.0)


def loss_terms(pred, truth, with_grad: bool = False):
    """Per-sequence generation and motion losses.

    ``pred``/``truth`` have shape ``(..., T, 73)``. Frame 0 is excluded from
    the generation term (it is the pinned reference); the motion term uses all
    ``T - 1`` crop deltas.

    Returns:
        ``(gen, mot)`` arrays over the leading axes, plus ``d(gen + mot)/d pred``
        when ``with_grad`` is set.
    """
    p = np.asarray(pred, dtype=np.float64)
    q = np.asarray(truth, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if p.shape[-1] != PARAM_DIM or p.shape[-2] < 1:
        raise ValueError("expected (..., T, 73) sequences")
    e = (p - q)[..., 1:, :]
    nb, ub = _unit_rows(e[..., EXPRESSION])
    nc, uc = _unit_rows(e[..., CROP])
    gen = (nb + nc + np.abs(e[..., POSE]).sum(axis=-1)).sum(axis=-1)

    if p.shape[-2] >= 2:
        dm = np.diff(p[..., CROP], axis=-2) - np.diff(q[..., CROP], axis=-2)
        nm, um = _unit_rows(dm)
        mot = nm.sum(axis=-1)
    else:
        mot = np.zeros_like(gen)
    if not with_grad:
        return gen, mot

    g = np.zeros_like(p)
    g[..., 1:, EXPRESSION] = ub
    g[..., 1:, CROP] = uc
    g[..., 1:, POSE] = np.sign(e[..., POSE])
    if p.shape[-2] >= 2:
        g[..., 1:, CROP] += um
        g[..., :-1, CROP] -= um
    return gen, mot, g


def loss_gen(pred, truth) -> float:
    """Sum over frames 1.. of ``||d_expr||_2 + ||d_crop||_2 + ||d_pose||_1``."""
    gen, _ = loss_terms(_values(pred), _values(truth))
    return float(gen)


def loss_mot(pred, truth) -> float:
    """Sum over frames of the Euclidean norm of the crop-velocity mismatch."""
    p, q = _values(pred), _values(truth)
    if p.shape[0] < 2:
        raise ValueError("motion loss needs at least two frames")
    _, mot = loss_terms(p, q)
    return float(mot)


def loss_total(pred, truth) -> float:
    return loss_gen(pred, truth) + loss_mot(pred, truth)


@dataclass
class Batch:
    features: np.ndarray    # (B, T, D)
    references: np.ndarray  # (B, 73)
    truth: np.ndarray       # (B, T, 73)


def batch_loss(weights: drv.DriverWeights, batch: Batch, train: bool = True, dropout_seed: int | None = 0):
    res, cache = drv.forward_batch(weights, batch.features, train=train, dropout_seed=dropout_seed)
    pred = drv.compose(batch.references, res, weights.config.residual)
    gen, mot = loss_terms(pred, batch.truth)
    return float(np.mean(gen + mot)), cache


def gradients(weights: drv.DriverWeights, batch: Batch, train: bool = True, dropout_seed: int | None = 0):
    """Mean per-clip ``loss_total`` over the batch and its exact gradient.

    Returns:
        ``(grads, stats)`` where ``stats`` holds the batch-mean loss terms and
        the forward cache (for running-statistics updates).
    """
    b = batch.features.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    res, cache = drv.forward_batch(weights, batch.features, train=train, dropout_seed=dropout_seed)
    pred = drv.compose(batch.references, res, weights.config.residual)
    gen, mot, dpred = loss_terms(pred, batch.truth, with_grad=True)
    d_res = dpred / b
    d_res[:, 0] = 0.0
    grads = drv.backward_batch(weights, cache, d_res)
    stats = {
        "loss_gen": float(np.mean(gen)),
        "loss_mot": float(np.mean(mot)),
        "loss_total": float(np.mean(gen + mot)),
        "cache": cache,
    }
    return grads, stats


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def adamw_init(params: dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState({k: np.zeros_like(p) for k, p in params.items()},
                          {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState, lr: float,
               weight_decay: float = 0.05, betas=(0.9, 0.999), eps: float = 1e-8):
    """One AdamW update, in place.

    Decay is decoupled: ``w <- w * (1 - lr * wd)`` happens before and
    independently of the bias-corrected Adam step.
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, w in params.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if weight_decay:
            w *= 1.0 - lr * weight_decay
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype)
    return params, state


def cosine_lr(step: int, total_steps: int, lr_max: float = 5e-3, lr_min: float = 1e-4) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainClip:
    """One training video: features and absolute parameters, row-aligned.

    Row 0 of ``params`` is the reference frame's parameters.
    """

    features: np.ndarray
    params: np.ndarray
    attitude: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.params = np.asarray(self.params.values if isinstance(self.params, ParamSequence) else self.params,
                                 dtype=np.float64)
        if self.features.shape[0] != self.params.shape[0]:
            raise ValueError("features and params must have the same number of frames")


@dataclass
class TrainResult:
    weights: drv.DriverWeights
    history: np.ndarray
    snapshots: list[tuple[int, drv.DriverWeights]] = field(default_factory=list)


def sample_batch(clips: list[TrainClip], config: TrainConfig, rng: np.random.Generator, attitude_dim: int = 0) -> Batch:
    """Random ``clip_length`` windows; each window's frame 0 is replaced by its clip reference."""
    T = config.clip_length
    idx = rng.integers(0, len(clips), size=config.batch_size)
    feats, refs, truth = [], [], []
    for i in idx:
        clip = clips[i]
        s = int(rng.integers(0, clip.params.shape[0] - T + 1))
        feats.append(drv.with_attitude(clip.features[s:s + T], clip.attitude, attitude_dim))
        ref = clip.params[0]
        window = clip.params[s:s + T].copy()
        window[0] = ref
        refs.append(ref)
        truth.append(window)
    return Batch(np.stack(feats), np.stack(refs), np.stack(truth))


def train(clips: list[TrainClip], driver_config: drv.DriverConfig, config: TrainConfig,
          init: drv.DriverWeights | None = None, progress=None) -> TrainResult:
    """Train a driver on random fixed-length windows.

    Deterministic for a given ``config.seed``. Snapshots are taken every
    ``config.snapshot_every`` steps and after the final step.
    """
    if not clips:
        raise ValueError("empty dataset")
    short = [i for i, c in enumerate(clips) if c.params.shape[0] < config.clip_length]
    if short:
        raise ValueError(f"dataset clip {short[0]} is shorter than clip_length={config.clip_length}")
    rng = np.random.default_rng(config.seed)
    weights = init.copy() if init is not None else drv.init_weights(driver_config, config.seed)
    state = adamw_init(weights.params)
    history = np.zeros((config.steps, len(HISTORY_COLUMNS)))
    snapshots = []
    total = max(config.steps - 1, 0)
    for step in range(config.steps):
        lr = cosine_lr(step, total, config.lr_max, config.lr_min)
        batch = sample_batch(clips, config, rng, driver_config.attitude_dim)
        dropout_seed = int(rng.integers(0, 2 ** 63 - 1))
        grads, stats = gradients(weights, batch, train=True, dropout_seed=dropout_seed)
        drv.update_running_stats(weights, stats["cache"])
        adamw_step(weights.params, grads, state, lr, config.weight_decay, config.betas, config.eps)
        history[step] = (step, lr, stats["loss_gen"], stats["loss_mot"], stats["loss_total"])
        done = step + 1
        if config.snapshot_every and (done % config.snapshot_every == 0 or done == config.steps):
            snapshots.append((done, weights.copy()))
        if progress is not None:
            progress(step, stats["loss_total"])
    return TrainResult(weights, history, snapshots)


def smoothed(values, window: int = 50) -> np.ndarray:
    """Trailing moving average (shorter at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(1, len(v) + 1)
    lo = np.maximum(0, i - window)
    return (c[i] - c[lo]) / (i - lo)


def write_history_csv(path, history: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join([str(int(row[0]))] + [repr(float(x)) for x in row[1:]]) + "\n")


def read_history_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
