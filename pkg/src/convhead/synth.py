"""Procedural paired audio / head-parameter / video clips.

Each clip's ground truth follows a published generating equation::

    z_t        = (lowpass(features)_t - center) / scale
    residual_t = output_scale * phi(M @ z_t) + bob_t
    params_t   = reference + residual_t      (frame 0 pinned to reference)

where ``lowpass`` is a causal exponential moving average (weight 0.5 on the
newest frame, started at frame 0), ``phi`` is identity (or tanh), and ``bob_t`` is a small
sinusoidal drift on the crop offsets. Frames composite a warped head sprite
over a static textured background, so the background never moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import FEATURE_DIM, AudioClip, FeatureSequence, extract_features
from .params import CROP, N_EXPRESSION, PARAM_DIM, ParamSequence, apply_residual
from .render import affine_grid, grid_sample_border

BACKGROUND_COLOR = (0.25, 0.45, 0.35)
BACKGROUND_TOL = 0.06
BOB_AMPLITUDE = 0.004


@dataclass
class SynthSpec:
    seed: int = 0
    n_clips: int = 32
    clip_seconds: float = 6.0
    fps: float = 30.0
    sample_rate: int = 16000
    height: int = 64
    width: int = 64
    nonlinearity: str | None = None
    smoothing: float = 0.5
    mapping_rank: int = 4
    mapping_matrix: np.ndarray = field(default=None, repr=False)
    feature_center: np.ndarray = field(default=None, repr=False)
    feature_scale: np.ndarray = field(default=None, repr=False)
    output_scale: np.ndarray = field(default=None, repr=False)
    background: np.ndarray = field(default=None, repr=False)
    head_sprite: np.ndarray = field(default=None, repr=False)

    @property
    def n_frames(self) -> int:
        return int(np.floor(self.clip_seconds * self.fps + 1e-9))


@dataclass
class SynthClip:
    audio: AudioClip
    features: FeatureSequence
    params: ParamSequence
    residuals: np.ndarray
    frames: np.ndarray
    reference_frame: np.ndarray
    foreground: np.ndarray  # (T, H, W) head alpha per frame

    @property
    def reference(self) -> np.ndarray:
        return self.params.values[0]


def _rng(spec_seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([spec_seed, index, stream])


def gen_audio(seed: int, index: int, seconds: float, sample_rate: int) -> AudioClip:
    """2-4 amplitude-modulated tones plus low-level noise, on the 16-bit grid."""
    rng = _rng(seed, index, 0)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    for _ in range(int(rng.integers(2, 5))):
        freq = rng.uniform(120.0, 2500.0)
        amp = rng.uniform(0.1, 0.3)
        rate = rng.uniform(0.5, 4.0)
        phase = rng.uniform(0, 2 * np.pi)
        env = (0.5 * (1.0 + np.sin(2 * np.pi * rate * t + phase))) ** 2
        out += amp * env * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    out += 0.005 * rng.standard_normal(n)
    peak = np.max(np.abs(out))
    if peak > 0.9:
        out *= 0.9 / peak
    # snap to the 16-bit PCM grid so the stored WAV is lossless
    return AudioClip(np.round(out * 32768.0) / 32768.0, sample_rate)


def lowpass(features: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Causal exponential moving average, started at frame 0."""
    f = np.asarray(features, dtype=np.float64)
    out = np.empty_like(f)
    acc = f[0].copy()
    for t in range(f.shape[0]):
        acc = (1.0 - alpha) * acc + alpha * f[t]
        out[t] = acc
    return out


def head_bob(seed: int, index: int, n_frames: int, fps: float) -> np.ndarray:
    """``(T, 2)`` sinusoidal drift added to the crop x/y residuals."""
    rng = _rng(seed, index, 1)
    freq = rng.uniform(0.2, 0.8, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    t = np.arange(n_frames)[:, None] / fps
    return BOB_AMPLITUDE * np.sin(2 * np.pi * freq * t + phase)


def reference_params(seed: int, index: int) -> np.ndarray:
    rng = _rng(seed, index, 2)
    ref = np.zeros(PARAM_DIM)
    ref[:N_EXPRESSION] = rng.normal(0.0, 0.5, N_EXPRESSION)
    ref[N_EXPRESSION + 1:N_EXPRESSION + 6] = rng.normal(0.0, 0.05, 5)
    # crop (0, 0, 1) and zero in-plane rotation: the reference frame is the unwarped canvas
    ref[CROP] = (0.0, 0.0, 1.0)
    return ref


def make_background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    y, x = np.mgrid[0:height, 0:width] / max(height, width)
    tex = 0.025 * np.sin(2 * np.pi * (3 * x + 2 * y)) + 0.015 * np.sin(2 * np.pi * 7 * y)
    tex = tex[..., None] * np.array([1.0, 0.6, -0.8])
    noise = rng.uniform(-0.01, 0.01, size=(height, width, 3))
    return np.clip(np.array(BACKGROUND_COLOR) + tex + noise, 0.0, 1.0)


def make_head_sprite(height: int, width: int) -> np.ndarray:
    """Full-canvas RGBA head: skin ellipse with eyes and mouth, soft alpha edge."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ry, rx = 0.3 * height, 0.22 * width
    d = np.sqrt(((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2)
    alpha = np.clip((1.0 - d) * min(rx, ry) / 1.5, 0.0, 1.0)
    rgb = np.empty((height, width, 3))
    rgb[:] = (0.92, 0.74, 0.62)
    for ex in (cx - 0.4 * rx, cx + 0.4 * rx):
        eye = ((y - (cy - 0.25 * ry)) / (0.1 * ry)) ** 2 + ((x - ex) / (0.15 * rx)) ** 2 <= 1.0
        rgb[eye] = (0.1, 0.1, 0.15)
    mouth = ((y - (cy + 0.45 * ry)) / (0.08 * ry)) ** 2 + ((x - cx) / (0.4 * rx)) ** 2 <= 1.0
    rgb[mouth] = (0.7, 0.2, 0.2)
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


def render_scene(spec: SynthSpec, params_vec) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth frame: warped sprite over the static background. Returns ``(frame, alpha)``."""
    grid = affine_grid(params_vec, spec.height, spec.width)
    sprite = grid_sample_border(spec.head_sprite, grid)
    alpha = sprite[..., 3]
    frame = alpha[..., None] * sprite[..., :3] + (1.0 - alpha[..., None]) * spec.background
    return frame, alpha


def _map(spec: SynthSpec, z: np.ndarray) -> np.ndarray:
    raw = z @ spec.mapping_matrix.T
    if spec.nonlinearity == "tanh":
        raw = np.tanh(raw)
    elif spec.nonlinearity is not None:
        raise ValueError(f"unknown nonlinearity {spec.nonlinearity!r}")
    return raw * spec.output_scale


def residuals_from_features(spec: SynthSpec, features: np.ndarray, index: int) -> np.ndarray:
    z = (lowpass(features, spec.smoothing) - spec.feature_center) / spec.feature_scale
    r = _map(spec, z)
    r[:, CROP.start:CROP.start + 2] += head_bob(spec.seed, index, r.shape[0], spec.fps)
    return r


def make_synth_spec(seed: int = 0, n_clips: int = 32, clip_seconds: float = 6.0, fps: float = 30.0,
                    sample_rate: int = 16000, height: int = 64, width: int = 64,
                    nonlinearity: str | None = None, mapping_rank: int = 4) -> SynthSpec:
    """Build a spec; feature normalization is fitted on the spec's own clips."""
    spec = SynthSpec(seed, n_clips, clip_seconds, fps, sample_rate, height, width, nonlinearity,
                     mapping_rank=mapping_rank)
    rng = np.random.default_rng([seed, 3])
    # low rank: head motion is driven by a few latent factors of the audio
    r = spec.mapping_rank
    spec.mapping_matrix = (rng.standard_normal((PARAM_DIM, r)) @ rng.standard_normal((r, FEATURE_DIM))
                           / np.sqrt(r * FEATURE_DIM))
    scale = np.empty(PARAM_DIM)
    scale[:N_EXPRESSION] = 0.3
    scale[N_EXPRESSION:N_EXPRESSION + 6] = (0.08, 0.05, 0.05, 0.02, 0.02, 0.02)
    scale[CROP] = (0.06, 0.06, 0.04)
    spec.output_scale = scale
    spec.background = make_background(rng, height, width)
    spec.head_sprite = make_head_sprite(height, width)

    smoothed = [lowpass(extract_features(gen_audio(seed, i, clip_seconds, sample_rate), fps).values,
                        spec.smoothing) for i in range(n_clips)]
    stacked = np.concatenate(smoothed)
    spec.feature_center = stacked.mean(axis=0)
    spec.feature_scale = np.maximum(stacked.std(axis=0), 1e-8)
    return spec


def gen_clip(spec: SynthSpec, index: int, with_frames: bool = True) -> SynthClip:
    if not 0 <= index < spec.n_clips:
        raise IndexError(f"clip index {index} out of range [0, {spec.n_clips})")
    audio = gen_audio(spec.seed, index, spec.clip_seconds, spec.sample_rate)
    feats = extract_features(audio, spec.fps)
    res = residuals_from_features(spec, feats.values, index)
    params = apply_residual(reference_params(spec.seed, index), res)
    ref_frame, _ = render_scene(spec, params.values[0])
    if with_frames:
        rendered = [render_scene(spec, v) for v in params.values]
        frames = np.stack([f for f, _ in rendered])
        fg = np.stack([a for _, a in rendered])
    else:
        frames = np.empty((0, spec.height, spec.width, 3))
        fg = np.empty((0, spec.height, spec.width))
    return SynthClip(audio, feats, params, res, frames, ref_frame, fg)


def train_clips(spec: SynthSpec, indices=None):
    from .training import TrainClip

    indices = range(spec.n_clips) if indices is None else indices
    out = []
    for i in indices:
        c = gen_clip(spec, i, with_frames=False)
        out.append(TrainClip(c.features.values, c.params.values))
    return out
