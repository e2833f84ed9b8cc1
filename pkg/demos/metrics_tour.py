"""
Image and distribution metrics
==============================

PSNR on frames, Frechet distance between Gaussian fits, and the mean
expression-coefficient distance.
"""

import numpy as np

from convhead import metrics

rng = np.random.default_rng(0)

# %%
# A uniform error of 16 grey levels is about 24 dB.
a = rng.integers(0, 200, (32, 32, 3)) / 255
print("PSNR: %.2f dB" % metrics.psnr(a, a + 16 / 255))

# %%
# Frechet distance between N(0, 1) and N(1, 4) is 1 + 1.
p = metrics.GaussianStats(np.zeros(1), np.eye(1))
q = metrics.GaussianStats(np.ones(1), 4 * np.eye(1))
print("Frechet:", metrics.frechet_distance(p, q))

# %%
# A combined report as written by the eval command.
frames_a = rng.random((6, 16, 16, 3))
frames_b = np.clip(frames_a + 0.02 * rng.standard_normal(frames_a.shape), 0, 1)
params_a = rng.standard_normal((6, 73))
print(metrics.evaluate(frames_a, frames_b, params_a, params_a + 0.1).to_text())
