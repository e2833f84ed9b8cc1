import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from convhead import audio
from convhead.audio import AudioClip
from oracles import naive_mfcc


def tone(freq=1000.0, seconds=1.0, sr=16000, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


class TestFrameSignal:
    def test_one_second_at_30fps(self):
        assert audio.frame_signal(tone(), 30).shape[0] == 30

    def test_half_second_block_size(self):
        blocks = audio.frame_signal(tone(seconds=0.5), 30)
        assert blocks.shape == (15, 400)

    def test_shorter_than_a_frame(self):
        with pytest.raises(ValueError, match="shorter than one video frame"):
            audio.frame_signal(AudioClip(np.ones(100), 16000), 30)

    def test_empty_audio(self):
        with pytest.raises(ValueError, match="empty audio"):
            audio.frame_signal(AudioClip(np.zeros(0), 16000), 30)

    def test_bad_fps(self):
        with pytest.raises(ValueError, match="invalid fps"):
            audio.frame_signal(tone(), 0)

    def test_blocks_are_centered(self):
        x = np.arange(16000, dtype=float)
        blocks = audio.frame_signal(AudioClip(x, 16000), 25)
        # block 3 is centered on sample 3*640
        assert blocks[3, 200] == 3 * 640
        # first block starts before the clip and is zero padded
        assert np.all(blocks[0, :200] == 0)


class TestMfcc:
    def test_tone_matches_naive_dft(self):
        block = tone().samples[:400]
        got = audio.mfcc_frame(block, 16000)
        want = naive_mfcc(block, 16000)
        assert np.max(np.abs(got - want)) < 1e-6

    def test_noise_matches_naive_dft(self):
        block = np.random.default_rng(5).standard_normal(300)
        assert np.max(np.abs(audio.mfcc_frame(block, 8000) - naive_mfcc(block, 8000))) < 1e-6

    def test_zero_block(self):
        c = audio.mfcc_frame(np.zeros(400), 16000)
        assert c[0] == pytest.approx(math.sqrt(26) * math.log(1e-10), rel=1e-12)
        assert np.max(np.abs(c[1:])) < 1e-9

    def test_amplitude_scaling_moves_only_c0(self):
        block = tone().samples[:400]
        a = audio.mfcc_frame(block, 16000)
        b = audio.mfcc_frame(2 * block, 16000)
        assert b[0] - a[0] == pytest.approx(math.sqrt(26) * math.log(4.0), rel=1e-9)
        assert np.max(np.abs(b[1:] - a[1:])) < 1e-9

    def test_dct_orthonormal(self):
        d = audio.dct_matrix(26)
        assert np.max(np.abs(d @ d.T - np.eye(26))) < 1e-10

    def test_filterbank_shape_and_peaks(self):
        fb = audio.mel_filterbank(16000, 512)
        assert fb.shape == (26, 257)
        assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1.0)


class TestDeltas:
    def test_constant(self):
        assert np.all(audio.delta_sequence(np.full((10, 3), 4.2)) == 0)

    def test_linear_ramp(self):
        d = audio.delta_sequence(np.arange(12.0))
        assert np.allclose(d[2:-2, 0], 1.0, atol=1e-12)

    def test_second_order_of_ramp(self):
        d = audio.delta_sequence(np.arange(20.0), order=2)
        assert np.allclose(d[4:-4, 0], 0.0, atol=1e-12)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            audio.delta_sequence(np.zeros(4), order=3)

    @given(arrays(np.float64, (9, 2), elements=st.floats(-100, 100)), st.floats(-50, 50))
    def test_offset_invariance(self, x, c):
        assert np.allclose(audio.delta_sequence(x), audio.delta_sequence(x + c), atol=1e-9)


class TestScalars:
    def test_zero_block(self):
        assert audio.scalar_features(np.zeros(16)) == (0.0, -100.0, 0.0)

    def test_alternating(self):
        e, _, z = audio.scalar_features(np.tile([1.0, -1.0], 8))
        assert e == 1.0 and z == 1.0

    def test_constant_half(self):
        e, l, z = audio.scalar_features(np.full(4, 0.5))
        assert e == 0.25 and z == 0.0
        assert l == pytest.approx(-6.0206, abs=1e-4)


class TestExtract:
    def test_shape(self):
        seq = audio.extract_features(tone(seconds=0.7), 30)
        assert seq.values.shape == (21, 45)
        assert len(seq.frame(0).pack()) == 45

    def test_silence(self):
        seq = audio.extract_features(AudioClip(np.zeros(8000), 16000), 30)
        assert np.all(seq.values[:, 14:42] == 0)
        assert np.all(seq.values[:, 44] == 0)

    def test_deterministic(self):
        clip = AudioClip(np.random.default_rng(1).standard_normal(12000), 16000)
        a = audio.extract_features(clip, 25).values
        b = audio.extract_features(clip, 25).values
        assert np.array_equal(a, b)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1000, 20000), st.sampled_from([8000, 16000, 22050]), st.sampled_from([24, 25, 30]))
    def test_frame_count(self, n, sr, fps):
        clip = AudioClip(np.ones(n), sr)
        assert len(audio.extract_features(clip, fps)) == int(math.floor(n * fps / sr + 1e-9))


class TestIO:
    def test_wav_roundtrip(self, tmp_path):
        clip = tone(seconds=0.2)
        audio.write_wav(tmp_path / "a.wav", clip)
        back = audio.load_audio(tmp_path / "a.wav")
        assert back.sample_rate == 16000
        assert np.max(np.abs(back.samples - clip.samples)) <= 1 / 32768

    def test_raw_f32(self, tmp_path):
        x = np.linspace(-1, 1, 50).astype("<f4")
        x.tofile(tmp_path / "a.f32")
        back = audio.load_audio(tmp_path / "a.f32", sample_rate=8000)
        assert np.array_equal(back.samples, x.astype(np.float64))
        with pytest.raises(ValueError):
            audio.load_audio(tmp_path / "a.f32")
