"""Independent reference computations used as test oracles.

Nothing here imports the code under test beyond plain data containers.
"""

import math

import numpy as np


# ---------------------------------------------------------------- MFCC

def naive_mfcc(block, sample_rate, n_coeffs=14, n_mels=26, floor=1e-10):
    """Direct O(N^2) DFT in extended precision, loop-built mel filters, explicit DCT-II sum."""
    x = np.asarray(block, dtype=np.longdouble)
    n = len(x)
    n_fft = 1
    while n_fft < n:
        n_fft *= 2
    pi = np.longdouble(math.pi)
    idx = np.arange(n, dtype=np.longdouble)
    window = 0.5 - 0.5 * np.cos(2 * pi * idx / n)
    xw = x * window

    n_bins = n_fft // 2 + 1
    power = []
    for k in range(n_bins):
        ang = 2 * pi * k * idx / n_fft
        re = np.sum(xw * np.cos(ang))
        im = -np.sum(xw * np.sin(ang))
        power.append(re * re + im * im)

    def hz2mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def mel2hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    top = hz2mel(sample_rate / 2.0)
    edges = [mel2hz(top * i / (n_mels + 1)) for i in range(n_mels + 2)]
    energies = []
    for m in range(n_mels):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        total = np.longdouble(0)
        for k in range(n_bins):
            f = k * sample_rate / n_fft
            if lo < f < hi:
                wgt = (f - lo) / (c - lo) if f <= c else (hi - f) / (hi - c)
                total += wgt * power[k]
        energies.append(math.log(max(float(total), floor)))

    out = []
    for q in range(n_coeffs):
        s = math.fsum(e * math.cos(math.pi * q * (2 * i + 1) / (2 * n_mels)) for i, e in enumerate(energies))
        scale = math.sqrt(1.0 / n_mels) if q == 0 else math.sqrt(2.0 / n_mels)
        out.append(scale * s)
    return np.array(out)


# ---------------------------------------------------------------- driver loss

def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def stacked_pred(stack, x, refs, num_layers, dtype=np.float64):
    """Predicted parameters ``(P, B, T, 73)`` for P weight sets at once (train-mode BN, no dropout).

    ``stack`` maps parameter names to arrays with a leading P axis. Gate
    blocks are ordered input, forget, candidate, output.
    """
    x = np.asarray(x, dtype=dtype)
    refs = np.asarray(refs, dtype=dtype)
    stack = {k: np.asarray(v, dtype=dtype) for k, v in stack.items()}
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    var = flat.var(axis=0)
    xhat = (x - mean) / np.sqrt(var + 1e-5)
    h_seq = xhat[None] * stack["bn.scale"][:, None, None, :] + stack["bn.shift"][:, None, None, :]
    P, B, T = h_seq.shape[0], x.shape[0], x.shape[1]
    for l in range(num_layers):
        W_x, W_h, b = stack[f"lstm{l}.W_x"], stack[f"lstm{l}.W_h"], stack[f"lstm{l}.b"]
        H = W_h.shape[1]
        xg = np.matmul(h_seq.reshape(P, B * T, -1), W_x).reshape(P, B, T, -1) + b[:, None, None, :]
        h = np.zeros((P, B, H), dtype=dtype)
        c = np.zeros((P, B, H), dtype=dtype)
        outs = []
        for t in range(T):
            z = xg[:, :, t] + np.matmul(h, W_h)
            i, f, g, o = _sig(z[..., :H]), _sig(z[..., H:2 * H]), np.tanh(z[..., 2 * H:3 * H]), _sig(z[..., 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            outs.append(h)
        h_seq = np.stack(outs, axis=2)
    res = np.matmul(h_seq.reshape(P, B * T, -1), stack["out.W"]).reshape(P, B, T, -1)
    pred = res + refs[None, :, None, :]
    pred[:, :, 0, :] = refs[None]
    return pred


def stacked_loss(stack, x, refs, truth, num_layers, dtype=np.float64):
    """Mean per-clip total loss for each of the P weight sets."""
    pred = stacked_pred(stack, x, refs, num_layers, dtype)
    truth = np.asarray(truth, dtype=dtype)
    err = pred - truth[None]
    e = err[:, :, 1:]
    gen = (np.sqrt((e[..., :64] ** 2).sum(-1)) + np.sqrt((e[..., 70:] ** 2).sum(-1))
           + np.abs(e[..., 64:70]).sum(-1)).sum(-1)
    dpc = np.diff(pred[..., 70:], axis=2) - np.diff(truth[None, ..., 70:], axis=2)
    mot = np.sqrt((dpc ** 2).sum(-1)).sum(-1)
    return (gen + mot).mean(axis=1)


def central_differences(params, x, refs, truth, num_layers, h=1e-4, chunk=600,
                         dtype=np.float64, only=None):
    """Central finite differences of ``stacked_loss`` for every scalar weight.

    ``only`` restricts the work to the given flat indices (others are NaN).
    Passing ``dtype=np.longdouble`` keeps cancellation in the difference from
    swamping partials many orders smaller than the loss itself.
    """
    names = list(params)
    sizes = [params[k].size for k in names]
    n = sum(sizes)
    flat0 = np.concatenate([params[k].ravel() for k in names]).astype(dtype)

    def unflatten(rows):
        out, off = {}, 0
        for k, s in zip(names, sizes):
            out[k] = rows[:, off:off + s].reshape((rows.shape[0],) + params[k].shape)
            off += s
        return out

    todo = np.arange(n) if only is None else np.asarray(only, dtype=np.int64)
    grads = np.full(n, np.nan, dtype=dtype)
    for start in range(0, len(todo), chunk):
        idx = todo[start:start + chunk]
        rows = np.repeat(flat0[None], 2 * len(idx), axis=0)
        rows[np.arange(len(idx)), idx] += h
        rows[len(idx) + np.arange(len(idx)), idx] -= h
        losses = stacked_loss(unflatten(rows), x, refs, truth, num_layers, dtype)
        grads[idx] = (losses[:len(idx)] - losses[len(idx):]) / (2 * h)
    base = stacked_loss(unflatten(flat0[None]), x, refs, truth, num_layers, dtype)[0]
    return float(base), {k: v[0].astype(np.float64) for k, v in unflatten(grads[None]).items()}


# ---------------------------------------------------------------- Adam

def plain_adam(w, grads, lr, betas=(0.9, 0.999), eps=1e-8):
    """Straightforward scalar-loop Adam over a list of gradient arrays."""
    w = np.array(w, dtype=np.float64).ravel()
    m = [0.0] * w.size
    v = [0.0] * w.size
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64).ravel()
        for j in range(w.size):
            m[j] = betas[0] * m[j] + (1 - betas[0]) * g[j]
            v[j] = betas[1] * v[j] + (1 - betas[1]) * g[j] * g[j]
            mh = m[j] / (1 - betas[0] ** t)
            vh = v[j] / (1 - betas[1] ** t)
            w[j] -= lr * mh / (math.sqrt(vh) + eps)
    return w
