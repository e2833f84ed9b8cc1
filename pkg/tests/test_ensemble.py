import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convhead import driver as drv
from convhead import ensemble as E
from convhead import training as tr
from convhead.driver import DriverConfig

CFG = DriverConfig(hidden_dim=6, num_layers=2, dropout_rate=0.0)


def member(seed):
    return drv.init_weights(CFG, seed, dtype=np.float64)


def feats(seed=0, T=9):
    return np.random.default_rng(seed).standard_normal((T, 45))


def test_single_member():
    w = member(0)
    ref = np.random.default_rng(1).standard_normal(73)
    a = E.ensemble_predict(E.EnsembleSpec([w]), feats(), ref).values
    assert np.array_equal(a, drv.forward(w, feats(), ref).values)


def test_cancellation():
    w1 = member(0)
    w2 = w1.copy()
    w2.params["out.W"] = -w2.params["out.W"]
    ref = np.arange(73.0)
    out = E.ensemble_predict(E.EnsembleSpec([w1, w2]), feats(), ref).values
    assert np.allclose(out, ref, atol=1e-15)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_jensen_squared_error(seed):
    r = np.random.default_rng(seed)
    members = [drv.init_weights(DriverConfig(hidden_dim=4, num_layers=1), int(s), dtype=np.float64)
               for s in r.integers(0, 10 ** 6, 3)]
    f = r.standard_normal((6, 45))
    ref = r.standard_normal(73)
    truth = ref + r.standard_normal((6, 73))
    spec = E.EnsembleSpec(members)
    ens = E.ensemble_predict(spec, f, ref).values
    errs = [np.sum((drv.forward(m, f, ref).values - truth) ** 2) for m in members]
    assert np.sum((ens - truth) ** 2) <= np.mean(errs) + 1e-12


def test_order_invariant_mean():
    stack = np.random.default_rng(0).standard_normal((5, 4, 73))
    a = E.mean_residuals(stack)
    b = E.mean_residuals(stack[::-1])
    assert np.array_equal(a, b)
    assert np.allclose(a, stack.mean(axis=0), atol=1e-15)
    assert np.array_equal(E.mean_residuals(np.stack([stack[0]] * 3)), stack[0])


class TestTopK:
    def test_sorting(self):
        ws = [member(i) for i in range(3)]
        spec = E.select_top_k(zip(ws, [3.0, 1.0, 2.0]), 2)
        assert spec.selected == [1, 2]
        assert spec.members[0] is ws[1]

    def test_all(self):
        ws = [member(i) for i in range(3)]
        assert len(E.select_top_k(zip(ws, [3.0, 1.0, 2.0]), 3)) == 3

    def test_ties(self):
        ws = [member(i) for i in range(3)]
        assert E.select_top_k(zip(ws, [1.0, 1.0, 1.0]), 1).selected == [0]

    def test_bad_k(self):
        with pytest.raises(ValueError):
            E.select_top_k([(member(0), 1.0)], 2)


def test_incompatible_members():
    other = drv.init_weights(DriverConfig(hidden_dim=4, num_layers=1, attitude_dim=2), 0)
    with pytest.raises(ValueError):
        E.EnsembleSpec([member(0), other])
    with pytest.raises(ValueError):
        E.EnsembleSpec([])


def test_self_ensemble_and_validation():
    r = np.random.default_rng(0)
    clips = [tr.TrainClip(r.standard_normal((12, 45)), r.standard_normal((12, 73))) for _ in range(2)]
    res = tr.train(clips, CFG, tr.TrainConfig(steps=6, clip_length=8, batch_size=2, snapshot_every=2))
    spec = E.self_ensemble(res, 3)
    assert spec.kind == "self" and len(spec) == 3
    v = E.validation_loss(spec, clips)
    assert np.isfinite(v) and v > 0
    with pytest.raises(ValueError):
        E.self_ensemble(res, 4)
