"""
Averaging several drivers
=========================

Ensembles average the members' residual predictions per frame. Because the
squared error is convex, the average is never worse than the typical member.
"""

import numpy as np

from convhead import driver as drv
from convhead import ensemble, synth, training

spec = synth.make_synth_spec(seed=2, n_clips=6, clip_seconds=4.0)
clips = synth.train_clips(spec)
cfg = drv.DriverConfig(hidden_dim=24, num_layers=2, dropout_rate=0.1)
tc = dict(batch_size=8, steps=150, clip_length=60, snapshot_every=50)

# %%
# Cross ensemble: three runs that differ only in their seed.
runs = [training.train(clips[:5], cfg, training.TrainConfig(seed=s, **tc)) for s in (0, 1, 2)]
cross = ensemble.EnsembleSpec([r.weights for r in runs], "cross")

# %%
# Self ensemble: the last three snapshots of the first run.
self_ens = ensemble.self_ensemble(runs[0], 3)

held = clips[5]
for name, spec_e in [("cross", cross), ("self", self_ens)]:
    pred = ensemble.ensemble_predict(spec_e, held.features, held.params[0]).values
    members = [drv.forward(w, held.features, held.params[0]).values for w in spec_e.members]
    mean_member = np.mean([np.sum((m - held.params) ** 2) for m in members])
    print("%-5s ensemble sq. error %.3f, mean member %.3f" % (name, np.sum((pred - held.params) ** 2), mean_member))

# %%
# Picking the best two of three by validation loss.
scored = [(r.weights, ensemble.validation_loss(r.weights, [held])) for r in runs]
print("selected members:", ensemble.select_top_k(scored, 2).selected)
