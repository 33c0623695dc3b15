import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspen import autodiff as ad
from aspen.autodiff import Jet, Param
from aspen.model import (MlpBackbone, ModelParams, expected_param_count, forward, init_model,
                         load_checkpoint, plain_forward, predict, save_checkpoint,
                         spectral_features)

TWO_PI = 2 * math.pi


def coord_pair(x, t, slots=ad.ORDER2):
    x, t = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(t, float))
    jx = ad.jet_lift_coordinate("x", x, slots)
    jt = ad.jet_lift_coordinate("t", t, slots)
    return Jet(np.stack([jx.data, jt.data], axis=-1), slots)


def test_default_shapes_and_count():
    p = init_model("aspen", m=128, sigma=10.0)
    assert p.spectral.K.value.shape == (128, 2)
    assert p.spectral.out_dim == 256
    shapes = p.backbone.shapes
    assert shapes[0] == (40, 256) and shapes[-1] == (2, 40)
    assert len(shapes) == 9  # 8 hidden layers + linear output
    assert p.n_trainable() == expected_param_count("aspen", 128, 8, 40)
    assert expected_param_count("aspen", 128, 8, 40) == 256 + (256 * 40 + 40) + 7 * 1640 + 82


def test_k_init_scale():
    K = init_model("aspen", m=128, sigma=10.0, rng=3).spectral.K.value
    assert 8.5 <= K.std() <= 11.5


def test_zero_sigma_gives_constant_features():
    p = init_model("aspen", m=5, sigma=0.0)
    assert np.all(p.spectral.K.value == 0)
    f = spectral_features(coord_pair([0.3, -2.0], [1.0, 4.0]), p.spectral.K.value)
    assert np.all(f.numpy()[0, :, :5] == 1.0) and np.all(f.numpy()[0, :, 5:] == 0.0)
    assert np.all(f.numpy()[1:] == 0.0)


def test_same_seed_same_params():
    a = init_model("aspen", m=8, rng=11)
    b = init_model("aspen", m=8, rng=11)
    assert np.array_equal(a.flat(), b.flat())
    assert not np.array_equal(a.flat(), init_model("aspen", m=8, rng=12).flat())


def test_fixed_fourier_excludes_k():
    p = init_model("fixed_fourier", m=8)
    assert p.spectral.K not in p.trainable()
    assert p.n_trainable() == expected_param_count("fixed_fourier", 8, 8, 40)


def test_baseline_shares_backbone_apart_from_input():
    a = init_model("aspen", m=16).backbone.shapes
    b = init_model("baseline", m=16).backbone.shapes
    assert a[1:] == b[1:] and a[0][1] == 32 and b[0][1] == 2


def test_every_trainable_scalar_reachable_once():
    p = init_model("aspen", m=4, layers=3, width=5)
    p.add_inverse(0.1, -0.5)
    offsets = [(q.offset, q.size) for q in p.trainable()]
    covered = np.zeros(p.n_trainable(), int)
    for off, n in offsets:
        covered[off:off + n] += 1
    assert np.all(covered == 1)
    v = p.flat() + 1.0
    p.set_flat(v)
    assert np.array_equal(p.flat(), v)


# --- spectral features -------------------------------------------------------

def test_feature_examples():
    K = np.array([[1.0, 0.0]])
    f = spectral_features(coord_pair(0.25, 3.7), K).numpy()
    assert f[0, 0, 0] == pytest.approx(0.0, abs=1e-15)  # cos(pi/2)
    assert f[1, 0, 0] == pytest.approx(-TWO_PI)  # dx of cos
    K = np.array([[0.0, 1.0]])
    f = spectral_features(coord_pair(1.1, 0.5), K).numpy()
    assert f[0, 0, 1] == pytest.approx(0.0, abs=1e-15)  # sin(pi)
    assert f[3, 0, 1] == pytest.approx(-TWO_PI)  # dt of sin


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(0, 2))
def test_feature_slots_match_symbolic(k1, k2, x, t):
    f = spectral_features(coord_pair(x, t), np.array([[k1, k2]])).numpy()[:, 0]
    ph = TWO_PI * (k1 * x + k2 * t)
    c, s = math.cos(ph), math.sin(ph)
    w1, w2 = TWO_PI * k1, TWO_PI * k2
    expect_cos = [c, -w1 * s, -w1 * w1 * c, -w2 * s]
    expect_sin = [s, w1 * c, -w1 * w1 * s, w2 * c]
    assert np.allclose(f[:, 0], expect_cos, atol=1e-10)
    assert np.allclose(f[:, 1], expect_sin, atol=1e-10)


# --- forward -------------------------------------------------------------------

def test_zero_network_outputs_zero():
    p = init_model("aspen", m=4, layers=2, width=3)
    for w in p.backbone.weights:
        w.value[...] = 0.0
    u, v = forward(p, np.array([0.1, 2.0]), np.array([1.0, 3.0]))
    assert np.all(u.numpy() == 0) and np.all(v.numpy() == 0)


def test_linear_probe_baseline():
    # one linear layer that returns x in physical units: u = (x1-x0)/2 * xn + mid
    W = Param(np.array([[8.75, 0.0], [0.0, 0.0]]), "W0")
    b = Param(np.array([-1.25, 0.0]), "b0")
    p = ModelParams("baseline", None, MlpBackbone([W], [b]), (-10.0, 7.5), (0.0, 10.0))
    u, _ = forward(p, np.array([0.7]), np.array([2.0]), ad.ORDER3)
    val, dx, dxx, dxxx, dt = (a[0] for a in u.as_tuple())
    assert (val, dx, dxx, dxxx, dt) == pytest.approx((0.7, 1.0, 0.0, 0.0, 0.0))


@pytest.mark.parametrize("mode", ["aspen", "fixed_fourier", "baseline"])
def test_forward_matches_plain_evaluator(mode):
    p = init_model(mode, m=16, rng=5)
    rng = np.random.default_rng(0)
    x, t = rng.uniform(-10, 7.5, 50), rng.uniform(0, 10, 50)
    u, v = forward(p, x, t)
    pu, pv = plain_forward(p, x, t)
    assert np.max(np.abs(u.numpy()[0] - pu)) < 1e-12
    assert np.max(np.abs(v.numpy()[0] - pv)) < 1e-12
    assert np.allclose(predict(p, x, t, chunk=7), pu + 1j * pv, atol=1e-15)


# --- checkpoints ------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["aspen", "fixed_fourier", "baseline"])
def test_checkpoint_roundtrip(tmp_path, mode):
    p = init_model(mode, m=6, layers=3, width=5, rng=2)
    if mode == "aspen":
        p.add_inverse(0.25, -1.1)
    h1 = save_checkpoint(p, tmp_path / "a.ckpt", "abc")
    q, hdr = load_checkpoint(tmp_path / "a.ckpt")
    assert hdr["config_hash"] == "abc" and hdr["mode"] == mode
    assert np.array_equal(p.flat(), q.flat())
    assert [x.value.shape for x in p.all_params()] == [x.value.shape for x in q.all_params()]
    assert save_checkpoint(q, tmp_path / "b.ckpt", "abc") == h1


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")
