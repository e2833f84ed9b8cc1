"""Audio front end: 45-dim per-video-frame features (MFCC, deltas, energy, loudness, ZCR)."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dct

N_MFCC = 14
N_MELS = 26
FEATURE_DIM = 3 * N_MFCC + 3
LOG_FLOOR = 1e-10
WINDOW_SECONDS = 0.025


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if int(self.sample_rate) <= 0:
            raise ValueError("invalid sample rate")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureFrame:
    mfcc: np.ndarray
    mfcc_delta: np.ndarray
    mfcc_delta2: np.ndarray
    energy: float
    loudness: float
    zcr: float

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.mfcc, self.mfcc_delta, self.mfcc_delta2, [self.energy, self.loudness, self.zcr]]
        )


@dataclass
class FeatureSequence:
    """T x 45 feature matrix, one row per video frame.

    Column layout is ``[mfcc(14) | delta(14) | delta2(14) | energy | loudness | zcr]``.
    """

    values: np.ndarray
    fps: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != FEATURE_DIM:
            raise ValueError(f"feature rows must have {FEATURE_DIM} values, got shape {self.values.shape}")
        if self.fps <= 0:
            raise ValueError("invalid fps")

    def __len__(self) -> int:
        return self.values.shape[0]

    def frame(self, i: int) -> FeatureFrame:
        row = self.values[i]
        k = N_MFCC
        return FeatureFrame(row[:k], row[k:2 * k], row[2 * k:3 * k], row[3 * k], row[3 * k + 1], row[3 * k + 2])


def _block_centers(n_samples: int, sample_rate: int, fps: float) -> np.ndarray:
    n_frames = int(math.floor(n_samples * fps / sample_rate + 1e-9))
    return np.array([int(math.floor(i * sample_rate / fps + 1e-9)) for i in range(n_frames)], dtype=np.int64)


def frame_signal(clip: AudioClip, fps: float, window_seconds: float = WINDOW_SECONDS) -> np.ndarray:
    """Cut ``clip`` into one window per video frame.

    Block ``i`` is centered on sample ``floor(i * sr / fps)``; samples outside
    the clip are zeros.

    Returns:
        Array of shape ``(floor(duration * fps), round(window_seconds * sr))``.
    """
    if len(clip.samples) == 0:
        raise ValueError("empty audio")
    if not fps > 0:
        raise ValueError("invalid fps")
    if not window_seconds > 0:
        raise ValueError("invalid window length")
    win = max(2, int(round(window_seconds * clip.sample_rate)))
    centers = _block_centers(len(clip.samples), clip.sample_rate, fps)
    if len(centers) == 0:
        raise ValueError("audio shorter than one video frame")
    half = win // 2
    padded = np.concatenate([np.zeros(half), clip.samples, np.zeros(win)])
    # padded index of sample s is s + half, so a block starting at c - half begins at padded[c]
    idx = centers[:, None] + np.arange(win)[None, :]
    return padded[idx]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = N_MELS) -> np.ndarray:
    """Unnormalized triangular filters from 0 Hz to Nyquist, shape ``(n_mels, n_fft // 2 + 1)``."""
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (center - lo)
    falling = (hi - bins[None, :]) / (hi - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.flags.writeable = False
    return fb


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k is the k-th basis vector."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    d[0] /= np.sqrt(2.0)
    return d


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mfcc_frames(blocks: np.ndarray, sample_rate: int, n_coeffs: int = N_MFCC, n_mels: int = N_MELS) -> np.ndarray:
    """Row-wise MFCCs of a ``(n_blocks, block_len)`` array."""
    blocks = np.atleast_2d(np.asarray(blocks, dtype=np.float64))
    n = blocks.shape[1]
    if n < 2:
        raise ValueError("block too short for MFCC")
    if n_coeffs > n_mels:
        raise ValueError("n_coeffs exceeds number of mel filters")
    n_fft = _next_pow2(n)
    spec = np.fft.rfft(blocks * _hann(n), n=n_fft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    mel = power @ mel_filterbank(int(sample_rate), n_fft, n_mels).T
    log_mel = np.log(np.maximum(mel, LOG_FLOOR))
    return dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_coeffs]


def mfcc_frame(block, sample_rate: int, n_coeffs: int = N_MFCC) -> np.ndarray:
    return mfcc_frames(np.asarray(block, dtype=np.float64)[None, :], sample_rate, n_coeffs)[0]


def delta_sequence(coeffs: np.ndarray, order: int = 1, width: int = 2) -> np.ndarray:
    """Regression delta over a +/-``width`` window with edge replication.

    ``order=2`` applies the delta twice.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    x = np.asarray(coeffs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise ValueError("empty coefficient sequence")
    for _ in range(order):
        t = x.shape[0]
        padded = np.pad(x, ((width, width), (0, 0)), mode="edge")
        num = np.zeros_like(x)
        for n in range(1, width + 1):
            num += n * (padded[width + n:width + n + t] - padded[width - n:width - n + t])
        x = num / (2.0 * sum(n * n for n in range(1, width + 1)))
    return x


def scalar_features(block) -> tuple[float, float, float]:
    """``(energy, loudness, zcr)`` of one block."""
    e, l, z = _scalar_features(np.atleast_2d(np.asarray(block, dtype=np.float64)))
    return float(e[0]), float(l[0]), float(z[0])


def _scalar_features(blocks: np.ndarray):
    if blocks.shape[1] == 0:
        raise ValueError("empty block")
    energy = np.mean(blocks ** 2, axis=1)
    loudness = 10.0 * np.log10(energy + LOG_FLOOR)
    if blocks.shape[1] < 2:
        zcr = np.zeros(blocks.shape[0])
    else:
        s = np.sign(blocks)
        zcr = np.sum(s[:, 1:] * s[:, :-1] < 0, axis=1) / (blocks.shape[1] - 1)
    return energy, loudness, zcr


def extract_features(clip: AudioClip, fps: float, window_seconds: float = WINDOW_SECONDS) -> FeatureSequence:
    blocks = frame_signal(clip, fps, window_seconds)
    mfcc = mfcc_frames(blocks, clip.sample_rate)
    d1 = delta_sequence(mfcc, 1)
    d2 = delta_sequence(mfcc, 2)
    energy, loudness, zcr = _scalar_features(blocks)
    values = np.concatenate([mfcc, d1, d2, energy[:, None], loudness[:, None], zcr[:, None]], axis=1)
    return FeatureSequence(values, fps)


def read_wav(path) -> AudioClip:
    """Read 16-bit PCM mono WAV."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2 or w.getnchannels() != 1:
            raise ValueError("expected 16-bit mono PCM WAV")
        sr = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, sr)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())


def read_raw_f32(path, sample_rate: int) -> AudioClip:
    """Headerless little-endian float32 samples."""
    return AudioClip(np.fromfile(Path(path), dtype="<f4").astype(np.float64), sample_rate)


def load_audio(path, sample_rate: int | None = None) -> AudioClip:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path)
    if sample_rate is None:
        raise ValueError("raw f32 audio needs a sample rate")
    return read_raw_f32(path, sample_rate)
