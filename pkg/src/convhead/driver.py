"""Sequential audio-to-head-parameter driver.

Input batch normalization over batch x time, a stack of unidirectional LSTM
layers with inverted dropout on the vertical connections, and a linear head
that emits one 73-dim residual per frame. The residual is added to the
reference frame's parameters; frame 0 is the reference itself.

Forward and backward passes are written out by hand so that the gradient can
be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .audio import FEATURE_DIM, FeatureSequence
from .params import PARAM_DIM, ParamSequence, as_vector

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class NumericalBlowup(FloatingPointError):
    pass


@dataclass(frozen=True)
class DriverConfig:
    input_dim: int = FEATURE_DIM
    attitude_dim: int = 0
    hidden_dim: int = 256
    num_layers: int = 4
    dropout_rate: float = 0.2
    output_dim: int = PARAM_DIM
    # ablation switches
    batchnorm: bool = True
    residual: bool = True

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValueError("num_layers and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.input_dim < 1 or self.output_dim < 1 or self.attitude_dim < 0:
            raise ValueError("invalid dimensions")

    @property
    def feature_dim(self) -> int:
        return self.input_dim + self.attitude_dim


@dataclass
class DriverWeights:
    config: DriverConfig
    params: dict[str, np.ndarray]
    running_mean: np.ndarray
    running_var: np.ndarray

    @property
    def dtype(self):
        return self.params["out.W"].dtype

    def copy(self) -> "DriverWeights":
        return DriverWeights(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            self.running_mean.copy(),
            self.running_var.copy(),
        )

    def astype(self, dtype) -> "DriverWeights":
        return DriverWeights(
            self.config,
            {k: v.astype(dtype) for k, v in self.params.items()},
            self.running_mean.astype(dtype),
            self.running_var.astype(dtype),
        )

    def with_config(self, **changes) -> "DriverWeights":
        w = self.copy()
        w.config = replace(self.config, **changes)
        return w


def param_shapes(config: DriverConfig) -> dict[str, tuple[int, ...]]:
    d, h = config.feature_dim, config.hidden_dim
    shapes = {"bn.scale": (d,), "bn.shift": (d,)}
    for l in range(config.num_layers):
        shapes[f"lstm{l}.W_x"] = (d if l == 0 else h, 4 * h)
        shapes[f"lstm{l}.W_h"] = (h, 4 * h)
        shapes[f"lstm{l}.b"] = (4 * h,)
    shapes["out.W"] = (h, config.output_dim)
    return shapes


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))[None, :]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_weights(config: DriverConfig, seed: int, dtype=np.float32) -> DriverWeights:
    """Seeded initialization.

    Recurrent matrices get one orthogonal block per gate, input and output
    projections are Glorot-uniform, and forget-gate biases start at 1.
    """
    rng = np.random.default_rng(seed)
    d, h = config.feature_dim, config.hidden_dim
    p: dict[str, np.ndarray] = {"bn.scale": np.ones(d), "bn.shift": np.zeros(d)}
    for l in range(config.num_layers):
        fan_in = d if l == 0 else h
        p[f"lstm{l}.W_x"] = _glorot(rng, fan_in, 4 * h)
        p[f"lstm{l}.W_h"] = np.concatenate([_orthogonal(rng, h) for _ in range(4)], axis=1)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        p[f"lstm{l}.b"] = b
    p["out.W"] = _glorot(rng, h, config.output_dim)
    weights = DriverWeights(config, p, np.zeros(d), np.ones(d))
    return weights.astype(dtype)


@dataclass
class ForwardCache:
    train: bool
    x: np.ndarray
    xhat: np.ndarray
    batch_mean: np.ndarray | None
    batch_var: np.ndarray | None
    layers: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    top: np.ndarray | None = None


def normalize_input(x, mean, var, scale, shift):
    """``(x - mean) / sqrt(var + eps) * scale + shift`` broadcast over the last axis."""
    return (x - mean) / np.sqrt(var + BN_EPS) * scale + shift


def batch_statistics(x: np.ndarray):
    """Per-column mean and biased variance over every frame of every sequence."""
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    var = ((flat - mean) ** 2).mean(axis=0)
    return mean, var


def update_running_stats(weights: DriverWeights, cache: ForwardCache, momentum: float = BN_MOMENTUM) -> None:
    """Fold one training batch's statistics into the running estimates (in place)."""
    if cache.batch_mean is None:
        return
    n = cache.x.shape[0] * cache.x.shape[1]
    unbiased = cache.batch_var * (n / max(n - 1, 1))
    weights.running_mean = ((1 - momentum) * weights.running_mean + momentum * cache.batch_mean).astype(weights.dtype)
    weights.running_var = ((1 - momentum) * weights.running_var + momentum * unbiased).astype(weights.dtype)


def _lstm_forward(inp, W_x, W_h, b):
    # time-major: inp is (T, B, D)
    T, bsz, _ = inp.shape
    H = W_h.shape[0]
    xg = inp @ W_x + b
    acts = np.empty((T, bsz, 4 * H), dtype=xg.dtype)
    cs = np.empty((T, bsz, H), dtype=xg.dtype)
    tcs = np.empty_like(cs)
    hs = np.empty_like(cs)
    h = np.zeros((bsz, H), dtype=xg.dtype)
    c = np.zeros_like(h)
    # xg is overwritten in place with the full gate pre-activations
    for t in range(T):
        z = xg[t]
        z += h @ W_h
        a = acts[t]
        # sigmoid(z) = (1 + tanh(z / 2)) / 2
        np.multiply(z, 0.5, out=a)
        np.tanh(a, out=a)
        a *= 0.5
        a += 0.5
        np.tanh(z[:, 2 * H:3 * H], out=a[:, 2 * H:3 * H])
        c_t = cs[t]
        np.multiply(a[:, H:2 * H], c, out=c_t)
        c_t += a[:, :H] * a[:, 2 * H:3 * H]
        np.tanh(c_t, out=tcs[t])
        np.multiply(a[:, 3 * H:], tcs[t], out=hs[t])
        h = hs[t]
        c = c_t
    return hs, (inp, acts, cs, tcs, hs)


def _lstm_backward(dhs, cache, W_x, W_h):
    inp, acts, cs, tcs, hs = cache
    T, bsz, H = hs.shape
    a = acts.reshape(T, bsz, 4, H)
    i, f, g, o = a[:, :, 0], a[:, :, 1], a[:, :, 2], a[:, :, 3]
    c_prev = np.concatenate([np.zeros_like(cs[:1]), cs[:-1]])
    h_prev = np.concatenate([np.zeros_like(hs[:1]), hs[:-1]])
    # d(gate pre-activation) = coefficient * dc for i, f, g and coefficient * dh for o
    coef = np.empty_like(a)
    coef[:, :, 0] = g * i * (1 - i)
    coef[:, :, 1] = c_prev * f * (1 - f)
    coef[:, :, 2] = i * (1 - g * g)
    coef[:, :, 3] = tcs * o * (1 - o)
    dc_from_h = o * (1 - tcs * tcs)
    f = np.ascontiguousarray(f)

    dG = np.empty_like(a)
    W_hT = np.ascontiguousarray(W_h.T)
    dh_next = np.zeros((bsz, H), dtype=hs.dtype)
    dc_next = np.zeros_like(dh_next)
    for t in range(T - 1, -1, -1):
        dh = dhs[t] + dh_next
        dc = dh * dc_from_h[t]
        dc += dc_next
        np.multiply(dc[:, None, :], coef[t, :, :3], out=dG[t, :, :3])
        np.multiply(dh, coef[t, :, 3], out=dG[t, :, 3])
        dh_next = dG[t].reshape(bsz, 4 * H) @ W_hT
        dc_next = dc * f[t]
    dG = dG.reshape(T * bsz, 4 * H)
    d_in = inp.shape[-1]
    grads = {
        "W_x": inp.reshape(-1, d_in).T @ dG,
        "W_h": h_prev.reshape(-1, H).T @ dG,
        "b": dG.sum(axis=0),
    }
    d_inp = (dG @ W_x.T).reshape(T, bsz, d_in)
    return grads, d_inp


def forward_batch(weights: DriverWeights, x, train: bool = False, dropout_seed: int | None = None):
    """Residuals for a batch of feature sequences.

    Args:
        x: ``(B, T, feature_dim)`` inputs.
        train: batch statistics + dropout when true, running statistics otherwise.
        dropout_seed: seeds the dropout masks; required in train mode when dropout is on.

    Returns:
        ``(residuals, cache)`` with residuals of shape ``(B, T, output_dim)``.
    """
    cfg = weights.config
    p = weights.params
    x = np.asarray(x, dtype=weights.dtype)
    if x.ndim != 3 or x.shape[-1] != cfg.feature_dim:
        raise ValueError(f"expected features of shape (B, T, {cfg.feature_dim}), got {x.shape}")
    if cfg.batchnorm:
        if train:
            mean, var = batch_statistics(x)
        else:
            mean, var = weights.running_mean, weights.running_var
        xhat = (x - mean) / np.sqrt(var + BN_EPS)
        h = xhat * p["bn.scale"] + p["bn.shift"]
    else:
        mean = var = None
        xhat = x
        h = x
    cache = ForwardCache(train, x, xhat, mean if train else None, var if train else None)

    use_dropout = train and cfg.dropout_rate > 0 and cfg.num_layers > 1
    if use_dropout and dropout_seed is None:
        raise ValueError("train mode needs a dropout seed")
    rng = np.random.default_rng(dropout_seed) if use_dropout else None
    keep = 1.0 - cfg.dropout_rate
    h = np.ascontiguousarray(h.transpose(1, 0, 2))
    for l in range(cfg.num_layers):
        if l > 0 and use_dropout:
            mask = (rng.random(h.shape) < keep).astype(h.dtype) / h.dtype.type(keep)
            cache.masks.append(mask)
            h = h * mask
        h, lc = _lstm_forward(h, p[f"lstm{l}.W_x"], p[f"lstm{l}.W_h"], p[f"lstm{l}.b"])
        cache.layers.append(lc)
    cache.top = h
    residuals = (h @ p["out.W"]).transpose(1, 0, 2)
    if not np.all(np.isfinite(residuals)):
        raise NumericalBlowup("numerical blowup")
    return residuals, cache


def backward_batch(weights: DriverWeights, cache: ForwardCache, d_residuals) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient w.r.t. the residual outputs."""
    cfg = weights.config
    p = weights.params
    d_res = np.ascontiguousarray(np.asarray(d_residuals, dtype=weights.dtype).transpose(1, 0, 2))
    top = cache.top
    grads = {"out.W": top.reshape(-1, top.shape[-1]).T @ d_res.reshape(-1, d_res.shape[-1])}
    dh = d_res @ p["out.W"].T
    for l in range(cfg.num_layers - 1, -1, -1):
        lg, dh = _lstm_backward(dh, cache.layers[l], p[f"lstm{l}.W_x"], p[f"lstm{l}.W_h"])
        for k, v in lg.items():
            grads[f"lstm{l}.{k}"] = v
        if l > 0 and cache.masks:
            dh = dh * cache.masks[l - 1]
    d_in = cache.x.shape[-1]
    dh = dh.transpose(1, 0, 2)
    if cfg.batchnorm:
        grads["bn.scale"] = (dh * cache.xhat).reshape(-1, d_in).sum(axis=0)
        grads["bn.shift"] = dh.reshape(-1, d_in).sum(axis=0)
    else:
        grads["bn.scale"] = np.zeros_like(p["bn.scale"])
        grads["bn.shift"] = np.zeros_like(p["bn.shift"])
    for k, v in grads.items():
        if not np.all(np.isfinite(v)):
            raise NumericalBlowup(f"non-finite gradient in {k}")
    return grads


def compose(reference, residuals, residual: bool = True) -> np.ndarray:
    """Turn network outputs into parameters: ``ref + r`` per frame, frame 0 pinned.

    ``reference`` is ``(B, 73)`` or ``(73,)``; ``residuals`` ``(B, T, 73)`` or ``(T, 73)``.
    With ``residual=False`` the outputs are used as absolute parameters (ablation).
    """
    ref = np.asarray(reference, dtype=np.float64)
    r = np.asarray(residuals, dtype=np.float64)
    out = r + ref[..., None, :] if residual else r.copy()
    out[..., 0, :] = ref
    return out


def with_attitude(features, attitude, attitude_dim: int) -> np.ndarray:
    """Append a one-hot listener attitude to every feature frame."""
    x = np.asarray(features.values if isinstance(features, FeatureSequence) else features, dtype=np.float64)
    if attitude_dim == 0:
        if attitude is not None:
            raise ValueError("model has no attitude input")
        return x
    if attitude is None:
        raise ValueError("model expects an attitude condition")
    a = np.asarray(attitude, dtype=np.float64).ravel()
    if a.shape != (attitude_dim,) or np.sum(a == 1.0) != 1 or np.sum(a == 0.0) != attitude_dim - 1:
        raise ValueError(f"attitude must be a one-hot vector of length {attitude_dim}")
    return np.concatenate([x, np.broadcast_to(a, (x.shape[0], attitude_dim))], axis=1)


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


def predict_residuals(weights: DriverWeights, features, attitude=None, train: bool = False,
                      dropout_seed: int | None = None) -> np.ndarray:
    x = with_attitude(features, attitude, weights.config.attitude_dim)
    res, _ = forward_batch(weights, x[None], train=train, dropout_seed=dropout_seed)
    return res[0].astype(np.float64)


def forward(weights: DriverWeights, features, reference, mode: str = "infer",
            dropout_seed: int | None = None, attitude=None) -> ParamSequence:
    """Predict a parameter sequence for one clip."""
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    ref = as_vector(reference)
    res = predict_residuals(weights, features, attitude, train=mode == "train", dropout_seed=dropout_seed)
    return ParamSequence(compose(ref, res, weights.config.residual))
