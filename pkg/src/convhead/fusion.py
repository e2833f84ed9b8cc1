"""Foreground-background fusion.

Background masks (1 = background) from a segmenter are stabilized with a
per-pixel temporal median over the current and four previous frames,
intersected with the reference frame's mask, feathered with a 7x7 Gaussian,
and used to paste the reference background into each generated frame.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterable, Iterator

import numpy as np
from scipy.ndimage import correlate1d

MEDIAN_WINDOW = 5
KERNEL_SIZE = 7
KERNEL_SIGMA = 1.5
_SOLID = 1e-12

Segmenter = Callable[[np.ndarray], np.ndarray]


def threshold_segment(frame: np.ndarray, background_color, tol: float) -> np.ndarray:
    """1 where every channel is within ``tol`` of ``background_color``, else 0."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    diff = np.abs(np.asarray(frame, dtype=np.float64) - np.asarray(background_color, dtype=np.float64))
    return (diff.max(axis=-1) <= tol).astype(np.float64)


class ThresholdSegmenter:
    def __init__(self, background_color, tol: float):
        self.background_color = tuple(float(c) for c in background_color)
        self.tol = float(tol)

    def __call__(self, frame):
        return threshold_segment(frame, self.background_color, self.tol)


def temporal_median(history) -> np.ndarray:
    """Per-pixel median over the given masks; lower median for even counts."""
    stack = np.asarray(list(history) if not isinstance(history, np.ndarray) else history, dtype=np.float64)
    if stack.ndim < 1 or stack.shape[0] == 0:
        raise ValueError("empty mask history")
    return np.sort(stack, axis=0)[(stack.shape[0] - 1) // 2]


def gaussian_kernel1d(size: int = KERNEL_SIZE, sigma: float = KERNEL_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_kernel(size: int = KERNEL_SIZE, sigma: float = KERNEL_SIGMA) -> np.ndarray:
    k = gaussian_kernel1d(size, sigma)
    return np.outer(k, k)


def gaussian_blur(mask: np.ndarray, size: int = KERNEL_SIZE, sigma: float = KERNEL_SIGMA) -> np.ndarray:
    """Separable blur with edge-replicated padding."""
    k = gaussian_kernel1d(size, sigma)
    out = correlate1d(np.asarray(mask, dtype=np.float64), k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def fusion_mask(med: np.ndarray, ref_mask: np.ndarray) -> np.ndarray:
    med = np.asarray(med, dtype=np.float64)
    ref_mask = np.asarray(ref_mask, dtype=np.float64)
    if med.shape != ref_mask.shape:
        raise ValueError(f"mask shapes differ: {med.shape} vs {ref_mask.shape}")
    out = np.clip(gaussian_blur(np.minimum(med, ref_mask)), 0.0, 1.0)
    # kernel taps do not sum to exactly 1 in floating point; keep solid regions solid
    out[out > 1.0 - _SOLID] = 1.0
    return out


def composite(generated: np.ndarray, reference: np.ndarray, fmask: np.ndarray) -> np.ndarray:
    """``(1 - m) * generated + m * reference`` per pixel."""
    gen = np.asarray(generated, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    m = np.asarray(fmask, dtype=np.float64)
    if gen.shape != ref.shape or m.shape != gen.shape[:2]:
        raise ValueError("frame and mask dimensions must agree")
    m = m[..., None]
    out = (1.0 - m) * gen + m * ref
    return np.clip(out, np.minimum(gen, ref), np.maximum(gen, ref))


def _fuse_stream(pairs, reference, ref_mask, window):
    history: deque = deque(maxlen=window)
    for frame, mask in pairs:
        if np.shape(mask) != np.shape(frame)[:2]:
            raise ValueError("mask does not match frame size")
        history.append(mask)
        yield composite(frame, reference, fusion_mask(temporal_median(history), ref_mask))


def iter_fused_masks(frames: Iterable[np.ndarray], masks: Iterable[np.ndarray], reference: np.ndarray,
                     ref_mask: np.ndarray, window: int = MEDIAN_WINDOW) -> Iterator[np.ndarray]:
    """Fuse with precomputed background masks (e.g. from an external segmenter)."""
    return _fuse_stream(zip(frames, masks, strict=True), reference, ref_mask, window)


def iter_fused(frames: Iterable[np.ndarray], reference: np.ndarray, segmenter: Segmenter,
               window: int = MEDIAN_WINDOW) -> Iterator[np.ndarray]:
    """Causal streaming fusion; frame t's output only depends on frames <= t."""
    pairs = ((f, segmenter(f)) for f in frames)
    return _fuse_stream(pairs, reference, segmenter(reference), window)


def fuse_sequence(frames, reference: np.ndarray, segmenter: Segmenter, window: int = MEDIAN_WINDOW) -> np.ndarray:
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to fuse")
    return np.stack(list(iter_fused(frames, reference, segmenter, window)))
