"""Toy warp renderer with border-replication padding.

Grid coordinates follow the align-corners convention: ``(-1, -1)`` is the
center of the top-left pixel and ``(+1, +1)`` the center of the bottom-right
pixel. Samples outside that square take the value of the nearest border
pixel, which fills regions uncovered by the warp with edge texture.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .params import HeadParams, ParamSequence, as_vector, unpack

_SNAP = 1e-9


class Renderer(Protocol):
    def __call__(self, params: HeadParams, reference: np.ndarray) -> np.ndarray: ...


def _axis(n: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)


def identity_grid(height: int, width: int) -> np.ndarray:
    """``(H, W, 2)`` grid of ``(x, y)`` sample coordinates that reproduces the image."""
    gx, gy = np.meshgrid(_axis(width), _axis(height))
    return np.stack([gx, gy], axis=-1)


def affine_grid(params, height: int, width: int) -> np.ndarray:
    """Inverse-warp grid for crop translation, crop scale and in-plane rotation ``pose[0]``.

    Output pixel ``u`` samples the source at ``R(-theta) (u - t) / s``, with
    the rotation carried out in pixel-proportional units so it stays rigid on
    non-square frames.
    """
    p = params if isinstance(params, HeadParams) else unpack(as_vector(params))
    tx, ty, scale = p.crop
    theta = p.pose[0]
    if not scale > 0:
        raise ValueError("crop scale must be positive")
    grid = identity_grid(height, width)
    x = grid[..., 0] - tx
    y = grid[..., 1] - ty
    if theta != 0.0:
        ax = (width - 1) / 2.0 if width > 1 else 1.0
        ay = (height - 1) / 2.0 if height > 1 else 1.0
        u, v = x * ax, y * ay
        c, s = np.cos(theta), np.sin(theta)
        x = (c * u + s * v) / ax
        y = (-s * u + c * v) / ay
    return np.stack([x / scale, y / scale], axis=-1)


def _source_coords(g: np.ndarray, n: int):
    pix = (g + 1.0) * 0.5 * (n - 1)
    r = np.round(pix)
    pix = np.where(np.abs(pix - r) < _SNAP, r, pix)
    pix = np.clip(pix, 0.0, n - 1)
    i0 = np.floor(pix).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, pix - i0


def _lerp(a, b, w):
    out = a + w * (b - a)
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def grid_sample_border(image: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Bilinear sampling with border padding.

    Args:
        image: ``(H, W)`` or ``(H, W, C)`` array.
        grid: ``(H', W', 2)`` sample coordinates, x first.
    """
    img = np.asarray(image, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape[-1] != 2:
        raise ValueError("grid must end in an (x, y) axis")
    h, w = img.shape[:2]
    x0, x1, wx = _source_coords(grid[..., 0], w)
    y0, y1, wy = _source_coords(grid[..., 1], h)
    if img.ndim == 3:
        wx = wx[..., None]
        wy = wy[..., None]
    top = _lerp(img[y0, x0], img[y0, x1], wx)
    bottom = _lerp(img[y1, x0], img[y1, x1], wx)
    return _lerp(top, bottom, wy)


def toy_render(reference: np.ndarray, params) -> np.ndarray:
    """Warp the whole reference frame by the head's crop and in-plane rotation.

    Expression coefficients are ignored.
    """
    ref = np.asarray(reference, dtype=np.float64)
    return grid_sample_border(ref, affine_grid(params, ref.shape[0], ref.shape[1]))


class ToyRenderer:
    def __call__(self, params, reference):
        return toy_render(reference, params)


def render_sequence(reference: np.ndarray, seq: ParamSequence, renderer: Renderer | None = None) -> np.ndarray:
    renderer = renderer or ToyRenderer()
    return np.stack([renderer(seq[t], reference) for t in range(len(seq))])
