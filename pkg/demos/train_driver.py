"""
Training a small driver
=======================

Generate a handful of synthetic clips, train a two-layer LSTM driver for a few
hundred steps and compare its prediction on an unseen clip with the truth.
"""

import numpy as np

from convhead import driver as drv
from convhead import synth, training

# %%
# Eight short clips; the last one is held out.
spec = synth.make_synth_spec(seed=1, n_clips=8, clip_seconds=4.0)
clips = synth.train_clips(spec)
train_set, held_out = clips[:7], clips[7]

# %%
# The loss history holds (step, lr, gen, mot, total) rows.
cfg = drv.DriverConfig(hidden_dim=32, num_layers=2, dropout_rate=0.1)
result = training.train(train_set, cfg, training.TrainConfig(batch_size=8, steps=300, clip_length=60))
smooth = training.smoothed(result.history[:, 4])
print("smoothed loss: %.2f -> %.2f" % (smooth[0], smooth[-1]))

# %%
# Inference on the held-out clip starts from its first frame's parameters.
pred = drv.forward(result.weights, held_out.features, held_out.params[0])
zero = np.repeat(held_out.params[:1], len(held_out.params), axis=0)
print("loss vs truth: model %.2f, frozen reference %.2f" % (
    training.loss_total(pred.values, held_out.params), training.loss_total(zero, held_out.params)))
