import json

import numpy as np
import pytest

from convhead import driver as drv
from convhead import persistence as io
from convhead.driver import DriverConfig


def weights():
    w = drv.init_weights(DriverConfig(hidden_dim=5, num_layers=2, attitude_dim=2, batchnorm=False), 3)
    w.running_mean = np.linspace(-1, 1, 47).astype(np.float32)
    return w


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        w = weights()
        io.save_checkpoint(tmp_path / "a.chdr", w)
        back = io.load_checkpoint(tmp_path / "a.chdr")
        assert back.config == w.config
        for k in w.params:
            assert np.array_equal(back.params[k], w.params[k]) and back.params[k].dtype == np.float32
        assert np.array_equal(back.running_mean, w.running_mean)
        assert io.checkpoint_bytes(back) == io.checkpoint_bytes(w)

    def test_header(self):
        data = io.checkpoint_bytes(weights())
        assert data[:4] == b"CHDR" and data[4:8] == (1).to_bytes(4, "little")

    def test_bad_magic(self):
        with pytest.raises(io.FormatError, match="magic"):
            io.checkpoint_from_bytes(b"XXXX" + io.checkpoint_bytes(weights())[4:])

    def test_version(self):
        data = bytearray(io.checkpoint_bytes(weights()))
        data[4] = 2
        with pytest.raises(io.FormatError, match="version"):
            io.checkpoint_from_bytes(bytes(data))

    def test_truncated_and_trailing(self):
        data = io.checkpoint_bytes(weights())
        with pytest.raises(io.FormatError):
            io.checkpoint_from_bytes(data[:-3])
        with pytest.raises(io.FormatError, match="trailing"):
            io.checkpoint_from_bytes(data + b"\0")


class TestFeatures:
    def test_roundtrip(self, tmp_path):
        v = np.random.default_rng(0).standard_normal((7, 45)).astype(np.float32)
        io.write_features(tmp_path / "f.chft", v)
        raw = (tmp_path / "f.chft").read_bytes()
        assert len(raw) == 16 + 7 * 45 * 4
        assert np.array_equal(io.read_features(tmp_path / "f.chft"), v)

    def test_length_check(self):
        data = io.feature_bytes(np.zeros((2, 45)))
        with pytest.raises(io.FormatError, match="payload"):
            io.features_from_bytes(data[:-4])
        with pytest.raises(io.FormatError, match="magic"):
            io.features_from_bytes(b"CHDR" + data[4:])


class TestFrames:
    def test_frame_dir_roundtrip(self, tmp_path):
        frames = np.random.default_rng(0).integers(0, 256, (3, 6, 5, 3)) / 255.0
        io.write_frame_dir(tmp_path / "f", frames, 25.0, "ref.png")
        assert sorted(p.name for p in (tmp_path / "f").iterdir()) == [
            "000000.png", "000001.png", "000002.png", "manifest.json"]
        back, meta = io.read_frame_dir(tmp_path / "f")
        assert np.array_equal(back, frames)
        assert meta == {"fps": 25.0, "frame_count": 3, "reference": "ref.png"}

    def test_missing_frame(self, tmp_path):
        io.write_frame_dir(tmp_path / "f", np.zeros((2, 4, 4, 3)), 30.0)
        (tmp_path / "f" / "000001.png").unlink()
        with pytest.raises(io.FormatError, match="missing"):
            io.frame_paths(tmp_path / "f")

    def test_gray_png(self, tmp_path):
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        io.write_png(tmp_path / "m.png", m)
        assert np.array_equal(io.read_mask_png(tmp_path / "m.png"), m)


def test_ensemble_manifest(tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"m{i}.chdr"
        io.save_checkpoint(p, weights())
        paths.append(p)
    io.write_ensemble_manifest(tmp_path / "ens.json", paths, "cross")
    assert json.loads((tmp_path / "ens.json").read_text())["members"] == ["m0.chdr", "m1.chdr"]
    spec = io.load_ensemble(tmp_path / "ens.json")
    assert len(spec) == 2 and spec.kind == "cross"
    (tmp_path / "empty.json").write_text('{"members": []}')
    with pytest.raises(io.FormatError):
        io.read_ensemble_manifest(tmp_path / "empty.json")
