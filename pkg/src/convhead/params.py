"""3DMM head parameter vectors: expression (64), pose (6), crop (3)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_EXPRESSION = 64
N_POSE = 6
N_CROP = 3
PARAM_DIM = N_EXPRESSION + N_POSE + N_CROP

EXPRESSION = slice(0, N_EXPRESSION)
POSE = slice(N_EXPRESSION, N_EXPRESSION + N_POSE)
CROP = slice(N_EXPRESSION + N_POSE, PARAM_DIM)
SELECTORS = {"expression": EXPRESSION, "pose": POSE, "crop": CROP}


@dataclass
class HeadParams:
    """One frame of head parameters.

    ``pose`` is three rotation components (radians) followed by three
    translations. ``crop`` is ``(x, y, scale)``: x/y are offsets in the
    renderer's normalized [-1, 1] image coordinates, scale is a multiplier.
    """

    expression: np.ndarray
    pose: np.ndarray
    crop: np.ndarray

    def __post_init__(self):
        self.expression = np.asarray(self.expression, dtype=np.float64).reshape(N_EXPRESSION)
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(N_POSE)
        self.crop = np.asarray(self.crop, dtype=np.float64).reshape(N_CROP)

    @classmethod
    def identity(cls) -> "HeadParams":
        return cls(np.zeros(N_EXPRESSION), np.zeros(N_POSE), np.array([0.0, 0.0, 1.0]))

    def validate(self) -> "HeadParams":
        if not self.crop[2] > 0:
            raise ValueError("crop scale must be positive")
        return self


def pack(params: HeadParams) -> np.ndarray:
    return np.concatenate([params.expression, params.pose, params.crop])


def unpack(v) -> HeadParams:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (PARAM_DIM,):
        raise ValueError(f"expected a {PARAM_DIM}-vector, got shape {v.shape}")
    return HeadParams(v[EXPRESSION].copy(), v[POSE].copy(), v[CROP].copy())


def as_vector(params) -> np.ndarray:
    if isinstance(params, HeadParams):
        return pack(params)
    v = np.asarray(params, dtype=np.float64)
    if v.shape != (PARAM_DIM,):
        raise ValueError(f"expected a {PARAM_DIM}-vector, got shape {v.shape}")
    return v


@dataclass
class ParamSequence:
    """T x 73 matrix of packed head parameters."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != PARAM_DIM or self.values.shape[0] == 0:
            raise ValueError(f"parameter sequence must be a non-empty T x {PARAM_DIM} matrix, got {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, t: int) -> HeadParams:
        return unpack(self.values[t])

    @property
    def expression(self) -> np.ndarray:
        return self.values[:, EXPRESSION]

    @property
    def pose(self) -> np.ndarray:
        return self.values[:, POSE]

    @property
    def crop(self) -> np.ndarray:
        return self.values[:, CROP]

    @classmethod
    def from_frames(cls, frames) -> "ParamSequence":
        return cls(np.stack([as_vector(f) for f in frames]))


def apply_residual(reference, residuals) -> ParamSequence:
    """Frame ``t`` is ``reference + residuals[t]``; frame 0 is pinned to the reference."""
    ref = as_vector(reference)
    r = np.asarray(residuals, dtype=np.float64)
    if r.ndim != 2 or r.shape[1] != PARAM_DIM:
        raise ValueError(f"residual rows must have {PARAM_DIM} values, got shape {r.shape}")
    out = ref[None, :] + r
    out[0] = ref
    return ParamSequence(out)


def motion_delta(seq, selector: str = "crop") -> np.ndarray:
    values = seq.values if isinstance(seq, ParamSequence) else np.asarray(seq, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("motion delta needs at least two frames")
    sel = values[:, SELECTORS[selector]]
    return sel[1:] - sel[:-1]


def write_params_csv(path, seq: ParamSequence) -> None:
    """73 comma-separated columns per row, no header; floats round-trip exactly."""
    lines = [",".join(repr(float(x)) for x in row) for row in seq.values]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_params_csv(path) -> ParamSequence:
    rows = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != PARAM_DIM:
                raise ValueError(f"{path}:{lineno}: expected {PARAM_DIM} columns, got {len(cells)}")
            rows.append([float(c) for c in cells])
    return ParamSequence(np.array(rows))
