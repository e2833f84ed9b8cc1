import math

import numpy as np
import pytest

from convhead import synth
from convhead.audio import extract_features


@pytest.fixture(scope="module")
def spec():
    return synth.make_synth_spec(seed=7, n_clips=3, clip_seconds=2.0, height=32, width=32)


def test_deterministic(spec):
    a, b = synth.gen_clip(spec, 1), synth.gen_clip(spec, 1)
    assert np.array_equal(a.audio.samples, b.audio.samples)
    assert np.array_equal(a.params.values, b.params.values)
    assert np.array_equal(a.frames, b.frames)


def test_feature_dim(spec):
    c = synth.gen_clip(spec, 0, with_frames=False)
    assert c.features.values.shape == (60, 45)
    assert c.params.values.shape == (60, 73)


def test_generating_equation_reproduced(spec):
    """Re-evaluate the documented equation from the stored mapping and fresh features."""
    for i in range(spec.n_clips):
        c = synth.gen_clip(spec, i, with_frames=False)
        f = extract_features(c.audio, spec.fps).values
        ema = np.empty_like(f)
        acc = f[0]
        for t in range(len(f)):
            acc = 0.5 * acc + 0.5 * f[t]
            ema[t] = acc
        z = (ema - spec.feature_center) / spec.feature_scale
        r = (spec.mapping_matrix @ z.T).T * spec.output_scale
        rng = np.random.default_rng([spec.seed, i, 1])
        freq = rng.uniform(0.2, 0.8, size=2)
        phase = rng.uniform(0, 2 * math.pi, size=2)
        t = np.arange(len(f))[:, None] / spec.fps
        r[:, 70:72] += 0.004 * np.sin(2 * math.pi * freq * t + phase)
        assert np.max(np.abs(r - c.residuals)) < 1e-9
        ref = c.params.values[0]
        assert np.max(np.abs(c.params.values[1:] - (ref + r[1:]))) < 1e-9


def test_tanh_variant():
    s = synth.make_synth_spec(seed=1, n_clips=1, clip_seconds=1.0, nonlinearity="tanh")
    c = synth.gen_clip(s, 0, with_frames=False)
    bob = synth.head_bob(1, 0, 30, 30.0)
    assert np.all(np.abs(c.residuals[:, :70]) <= s.output_scale[:70])
    assert np.all(np.abs(c.residuals[:, 70:72] - bob) <= s.output_scale[70:72])


def test_frames(spec):
    c = synth.gen_clip(spec, 2)
    assert c.frames.shape == (60, 32, 32, 3)
    assert np.array_equal(c.frames[0], c.reference_frame)
    assert np.all((c.frames >= 0) & (c.frames <= 1))
    # pixels with no head show the static background
    bg = c.foreground == 0
    assert np.array_equal(c.frames[bg], np.broadcast_to(spec.background, c.frames.shape)[bg])


def test_reference_is_unwarped(spec):
    ref = synth.reference_params(spec.seed, 0)
    assert np.array_equal(ref[70:], [0.0, 0.0, 1.0]) and ref[64] == 0.0


def test_index_range(spec):
    with pytest.raises(IndexError):
        synth.gen_clip(spec, 3)


def test_unknown_nonlinearity(spec):
    import dataclasses
    bad = dataclasses.replace(spec, nonlinearity="relu")
    with pytest.raises(ValueError):
        synth.gen_clip(bad, 0, with_frames=False)


def test_train_clips(spec):
    clips = synth.train_clips(spec, [0, 2])
    assert len(clips) == 2
    assert np.array_equal(clips[1].params, synth.gen_clip(spec, 2, with_frames=False).params.values)


def test_wav_is_lossless(spec, tmp_path):
    from convhead.audio import read_wav, write_wav
    c = synth.gen_clip(spec, 0, with_frames=False)
    write_wav(tmp_path / "a.wav", c.audio)
    assert np.array_equal(read_wav(tmp_path / "a.wav").samples, c.audio.samples)
