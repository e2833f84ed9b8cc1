"""
Audio features per video frame
==============================

One 25 ms window per video frame, 45 numbers each: 14 MFCCs, their
first and second regression deltas, energy, loudness and zero-crossing rate.
"""

import numpy as np

from convhead.audio import AudioClip, extract_features, mfcc_frame

# %%
# A one-second 1 kHz tone with a slow amplitude ramp.
sr = 16000
t = np.arange(sr) / sr
clip = AudioClip(np.linspace(0.1, 0.8, sr) * np.sin(2 * np.pi * 1000 * t), sr)

feats = extract_features(clip, fps=30)
print("feature matrix:", feats.values.shape)

# %%
# Loudness follows the ramp, the tone's zero-crossing rate stays put.
print("loudness dB, first/last frame: %.1f / %.1f" % (feats.values[1, 43], feats.values[-1, 43]))
print("zcr, first/last frame: %.4f / %.4f" % (feats.values[1, 44], feats.values[-1, 44]))

# %%
# Doubling the amplitude moves only c0: log-energy is shared by every mel band.
block = clip.samples[8000:8400]
diff = mfcc_frame(2 * block, sr) - mfcc_frame(block, sr)
print("c0 shift:", round(diff[0], 6), " largest other shift:", np.abs(diff[1:]).max())
