"""Output-space ensembles of driver models.

Members' residual predictions are averaged frame by frame and the mean is
applied to the reference once. Members can be snapshots of a single run
("self") or independently trained runs ("cross").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import driver as drv
from .params import ParamSequence, as_vector
from .training import TrainClip, TrainResult, loss_terms

KINDS = ("self", "cross")


@dataclass
class EnsembleSpec:
    members: list[drv.DriverWeights]
    kind: str = "cross"
    sources: list[str] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        first = self.members[0].config
        for m in self.members[1:]:
            c = m.config
            if (c.feature_dim, c.output_dim, c.residual) != (first.feature_dim, first.output_dim, first.residual):
                raise ValueError("incompatible ensemble members")

    def __len__(self) -> int:
        return len(self.members)


def mean_residuals(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0 that does not depend on member order.

    Values are sorted per element before summing, and the mean is taken as
    an offset from the smallest value so identical members reproduce their
    common prediction exactly.
    """
    s = np.sort(np.asarray(stack, dtype=np.float64), axis=0)
    return s[0] + (s - s[0]).mean(axis=0)


def ensemble_residuals(spec: EnsembleSpec, features, attitude=None) -> np.ndarray:
    preds = [drv.predict_residuals(m, features, attitude) for m in spec.members]
    return mean_residuals(np.stack(preds))


def ensemble_predict(spec: EnsembleSpec, features, reference, attitude=None) -> ParamSequence:
    res = ensemble_residuals(spec, features, attitude)
    return ParamSequence(drv.compose(as_vector(reference), res, spec.members[0].config.residual))


def select_top_k(candidates, k: int, kind: str = "cross") -> EnsembleSpec:
    """Keep the ``k`` candidates with the smallest validation loss.

    Args:
        candidates: ``(weights, validation_loss)`` pairs; ties go to the earlier entry.
    """
    candidates = list(candidates)
    if k <= 0:
        raise ValueError("k must be positive")
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds the {len(candidates)} candidates")
    order = sorted(range(len(candidates)), key=lambda i: (candidates[i][1], i))[:k]
    return EnsembleSpec([candidates[i][0] for i in order], kind, selected=order)


def self_ensemble(result: TrainResult, n: int = 3) -> EnsembleSpec:
    """Last ``n`` snapshots of one training run."""
    if len(result.snapshots) < n:
        raise ValueError(f"run has {len(result.snapshots)} snapshots, need {n}")
    return EnsembleSpec([w for _, w in result.snapshots[-n:]], "self")


def validation_loss(weights_or_spec, clips: list[TrainClip]) -> float:
    """Mean ``loss_total`` over whole held-out clips, inference mode, reference = frame 0."""
    total = 0.0
    for clip in clips:
        if isinstance(weights_or_spec, EnsembleSpec):
            pred = ensemble_predict(weights_or_spec, clip.features, clip.params[0], clip.attitude)
        else:
            pred = drv.forward(weights_or_spec, clip.features, clip.params[0], attitude=clip.attitude)
        gen, mot = loss_terms(pred.values, clip.params)
        total += float(gen + mot)
    return total / len(clips)
