"""
Pasting back a static background
================================

The toy renderer warps the whole frame, so the background drifts with the
head. Fusion finds pixels that are background both now (median over the last
five masks) and in the reference, feathers that mask and pastes the reference
there.
"""

import numpy as np

from convhead import fusion, synth
from convhead.params import PARAM_DIM
from convhead.render import toy_render

rng = np.random.default_rng(0)
spec = synth.SynthSpec(height=48, width=48)
spec.background = synth.make_background(rng, 48, 48)
spec.head_sprite = synth.make_head_sprite(48, 48)

rest = np.zeros(PARAM_DIM)
rest[72] = 1.0
reference, _ = synth.render_scene(spec, rest)

# %%
# Swing the head left and right and keep the true head alpha for scoring.
frames, alphas = [], []
for t in range(10):
    p = rest.copy()
    p[70] = 0.25 * np.sin(0.6 * t)
    frames.append(toy_render(reference, p))
    alphas.append(synth.render_scene(spec, p)[1])
frames = np.stack(frames)

seg = fusion.ThresholdSegmenter(synth.BACKGROUND_COLOR, synth.BACKGROUND_TOL)
fused = fusion.fuse_sequence(frames, reference, seg)

# %%
# Error against the true background, on pixels the head does not cover.
bg = np.stack(alphas) == 0
print("background MSE before: %.2e" % np.mean((frames - spec.background)[bg] ** 2))
print("background MSE after:  %.2e" % np.mean((fused - spec.background)[bg] ** 2))
