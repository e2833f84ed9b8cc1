"""Binary and directory formats.

Checkpoint (``.chdr``), little-endian::

    b"CHDR" | u32 version
    u32 input_dim | u32 attitude_dim | u32 hidden_dim | u32 num_layers | u32 output_dim
    f64 dropout_rate | u32 flags (bit 0 batchnorm, bit 1 residual)
    u32 n_tensors, then per tensor: u16 name_len | name (utf-8) | u32 ndim | u32 dims[ndim] | f32 data
    u32 dim | f32 running_mean[dim] | f32 running_var[dim]

Feature file (``.chft``)::

    b"CHFT" | u32 version | u32 frames | u32 dim | f32 data[frames * dim]

Frame directories hold ``%06d.png`` frames plus ``manifest.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .driver import DriverConfig, DriverWeights, param_shapes

CHECKPOINT_MAGIC = b"CHDR"
CHECKPOINT_VERSION = 1
FEATURE_MAGIC = b"CHFT"
FEATURE_VERSION = 1
FRAME_PATTERN = "{:06d}.png"
MANIFEST = "manifest.json"


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {self.what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32)


def _f32_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def checkpoint_bytes(weights: DriverWeights) -> bytes:
    c = weights.config
    flags = (1 if c.batchnorm else 0) | (2 if c.residual else 0)
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
             struct.pack("<5IdI", c.input_dim, c.attitude_dim, c.hidden_dim, c.num_layers, c.output_dim,
                         c.dropout_rate, flags),
             struct.pack("<I", len(weights.params))]
    for name in sorted(weights.params):
        arr = weights.params[name]
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(_f32_bytes(arr))
    parts.append(struct.pack("<I", weights.running_mean.shape[0]))
    parts.append(_f32_bytes(weights.running_mean))
    parts.append(_f32_bytes(weights.running_var))
    return b"".join(parts)


def checkpoint_from_bytes(data: bytes) -> DriverWeights:
    r = _Reader(data, "checkpoint")
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    input_dim, attitude_dim, hidden, layers, output_dim, dropout, flags = r.unpack("<5IdI")
    config = DriverConfig(input_dim, attitude_dim, hidden, layers, dropout, output_dim,
                          batchnorm=bool(flags & 1), residual=bool(flags & 2))
    (n,) = r.unpack("<I")
    params = {}
    for _ in range(n):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        params[name] = r.f32(int(np.prod(shape, dtype=np.int64))).reshape(shape)
    expected = param_shapes(config)
    if {k: v.shape for k, v in params.items()} != expected:
        raise FormatError("checkpoint tensors do not match its config")
    (dim,) = r.unpack("<I")
    mean = r.f32(dim)
    var = r.f32(dim)
    if r.pos != len(data):
        raise FormatError("trailing bytes in checkpoint")
    return DriverWeights(config, {k: params[k] for k in expected}, mean, var)


def save_checkpoint(path, weights: DriverWeights) -> None:
    Path(path).write_bytes(checkpoint_bytes(weights))


def load_checkpoint(path) -> DriverWeights:
    return checkpoint_from_bytes(Path(path).read_bytes())


def feature_bytes(values: np.ndarray) -> bytes:
    v = np.asarray(values)
    if v.ndim != 2:
        raise ValueError("features must be a frames x dim matrix")
    return FEATURE_MAGIC + struct.pack("<3I", FEATURE_VERSION, v.shape[0], v.shape[1]) + _f32_bytes(v)


def features_from_bytes(data: bytes) -> np.ndarray:
    r = _Reader(data, "feature file")
    if r.take(4) != FEATURE_MAGIC:
        raise FormatError("not a feature file (bad magic)")
    version, frames, dim = r.unpack("<3I")
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported feature file version {version}")
    if len(data) - r.pos != frames * dim * 4:
        raise FormatError("feature payload length does not match header")
    return r.f32(frames * dim).reshape(frames, dim)


def write_features(path, values: np.ndarray) -> None:
    Path(path).write_bytes(feature_bytes(values))


def read_features(path) -> np.ndarray:
    return features_from_bytes(Path(path).read_bytes())


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, frame: np.ndarray) -> None:
    arr = to_uint8(frame)
    Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def write_frame_dir(directory, frames, fps: float, reference: str | None = None) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = d / FRAME_PATTERN.format(i)
        write_png(p, frame)
        paths.append(p)
    manifest = {"fps": float(fps), "frame_count": len(paths), "reference": reference}
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def frame_paths(directory) -> list[Path]:
    d = Path(directory)
    manifest = d / MANIFEST
    if manifest.exists():
        count = json.loads(manifest.read_text(encoding="utf-8"))["frame_count"]
        paths = [d / FRAME_PATTERN.format(i) for i in range(count)]
        missing = [p.name for p in paths if not p.exists()]
        if missing:
            raise FormatError(f"frame directory {d} is missing {missing[0]}")
        return paths
    paths = sorted(d.glob("[0-9]" * 6 + ".png"))
    if not paths:
        raise FormatError(f"no frames in {d}")
    return paths


def read_frame_dir(directory) -> tuple[np.ndarray, dict]:
    d = Path(directory)
    manifest = d / MANIFEST
    meta = json.loads(manifest.read_text(encoding="utf-8")) if manifest.exists() else {}
    frames = np.stack([read_png(p) for p in frame_paths(d)])
    return frames, meta


def read_mask_dir(directory, names) -> list[np.ndarray]:
    """Grayscale masks matched to frames by file name."""
    d = Path(directory)
    out = []
    for name in names:
        p = d / name
        if not p.exists():
            raise FormatError(f"mask {p} not found")
        out.append(read_mask_png(p))
    return out


def write_ensemble_manifest(path, checkpoint_paths, kind: str) -> None:
    path = Path(path)
    members = [str(Path(p).resolve().relative_to(path.parent.resolve()))
               if Path(p).resolve().is_relative_to(path.parent.resolve()) else str(Path(p).resolve())
               for p in checkpoint_paths]
    path.write_text(json.dumps({"kind": kind, "members": members}, indent=2) + "\n", encoding="utf-8")


def read_ensemble_manifest(path):
    """Returns ``(kind, [checkpoint paths])`` with relative members resolved against the manifest's folder."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if "members" not in data or not data["members"]:
        raise FormatError("ensemble manifest lists no members")
    members = [p if Path(p).is_absolute() else path.parent / p for p in data["members"]]
    return data.get("kind", "cross"), [Path(p) for p in members]


def load_ensemble(path):
    from .ensemble import EnsembleSpec

    kind, members = read_ensemble_manifest(path)
    return EnsembleSpec([load_checkpoint(p) for p in members], kind, [str(p) for p in members])
