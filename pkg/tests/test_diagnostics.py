import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from aspen import diagnostics as dg
from aspen.model import init_model
from aspen.pde import make_pde
from aspen.reference import Field

PDE = make_pde("CGLE")


# --- relative L2 --------------------------------------------------------------------

def test_relative_l2_examples():
    A = np.array([[3.0 + 4j, 0.0], [0.0, 0.0]])
    assert dg.relative_l2(A, A) == 0.0
    assert dg.relative_l2(2 * A, A) == pytest.approx(1.0)
    # error confined to one point: |1| / |5|
    B = A.copy(); B[1, 1] = 1.0
    assert dg.relative_l2(B, A) == pytest.approx(0.2)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_relative_l2_scale_covariance(lr, li, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 9)) + 1j * rng.normal(size=(4, 9))
    lam = complex(lr, li)
    assert dg.relative_l2(lam * A, A) == pytest.approx(abs(lam - 1), rel=1e-9, abs=1e-12)


def test_relative_l2_rejects_bad_input():
    with pytest.raises(ValueError):
        dg.relative_l2(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        dg.relative_l2(np.ones(3), np.ones(4))


# --- wall position ----------------------------------------------------------------------

def test_wall_examples():
    x = np.linspace(-5, 5, 101)
    assert dg.wall_position(np.tanh(-x), x) == pytest.approx(0.0, abs=1e-12)
    dx = x[1] - x[0]
    assert dg.wall_position(np.tanh(-(x - dx)), x) == pytest.approx(dx, abs=1e-12)
    assert dg.wall_position(np.ones_like(x), x) is None
    # of two walls the one nearest the origin is reported
    assert dg.wall_position(np.cos(np.pi * (x - 0.5) / 6), x) == pytest.approx(-2.5, abs=1e-2)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0.3, 3))
def test_wall_within_half_cell_of_fine_estimate(x0, w):
    x = np.linspace(-10, 7.5, 257)
    fine = np.linspace(-10, 7.5, 2561)
    coarse = dg.wall_position(np.tanh(-(x - x0) / w), x)
    ref = dg.wall_position(np.tanh(-(fine - x0) / w), fine)
    assert abs(coarse - ref) < (x[1] - x[0]) / 2


# --- free energy ------------------------------------------------------------------------------

def test_free_energy_examples():
    n, dx = 200, 0.05
    L = n * dx
    assert dg.free_energy(np.exp(1j * 0.3) * np.ones(n), dx) == pytest.approx(0.0, abs=1e-14)
    assert dg.free_energy(np.zeros(n), dx) == pytest.approx(L / 2)
    # linear ramp A = k x with |A| small contributes k^2 L from the gradient
    x = np.arange(n) * dx
    k = 1e-4
    got = dg.free_energy(k * x, dx)
    expect = k * k * L + 0.5 * np.sum((k * k * x * x - 1) ** 2) * dx
    assert got == pytest.approx(expect, rel=1e-12)


# --- power spectrum --------------------------------------------------------------------------

def test_pure_tone_peaks_at_its_frequency():
    n, L = 256, 17.5
    x = np.arange(n) * L / n
    f, p = dg.power_spectrum(np.cos(2 * np.pi * 3 * x / L) + 0j, L / n)
    assert f[np.argmax(p)] == pytest.approx(3 / L)


@given(st.integers(0, 2**31), st.sampled_from([64, 65, 128]))
def test_parseval(seed, n):
    u = np.random.default_rng(seed).normal(size=n)
    _, p = dg.power_spectrum(u, 0.1)
    assert p.sum() == pytest.approx(n * np.sum(u * u), rel=1e-10)


def test_white_noise_is_flat():
    rng = np.random.default_rng(0)
    n, rows = 256, 400
    acc = sum(dg.power_spectrum(rng.normal(size=n), 1.0)[1] for _ in range(rows)) / rows
    interior = acc[1:-1] / (2 * n)  # expected value 1 in every interior bin
    assert np.all(np.abs(interior - 1) < 0.3)
    assert abs(interior.mean() - 1) < 0.02


def test_log_spectrum_rms():
    p = np.linspace(1, 2, 50)
    assert dg.log_spectrum_rms(p, p) == 0.0
    assert dg.log_spectrum_rms(10 * p, p) == pytest.approx(1.0)
    # empty bins are floored, not infinite
    assert math.isfinite(dg.log_spectrum_rms(np.zeros(50), p))


# --- K histogram -------------------------------------------------------------------------

def test_k_histogram_zero_scale():
    K = np.zeros((16, 2))
    edges, before, after = dg.k_histogram(K, K)
    assert before[0] == 16 and before.sum() == 16 and np.array_equal(before, after)


def test_k_init_norms_are_rayleigh():
    sigma = 10.0
    K = init_model("aspen", m=512, sigma=sigma, layers=1, width=2, rng=0).spectral.K.value
    norms = np.linalg.norm(K, axis=1)
    assert stats.kstest(norms, stats.rayleigh(scale=sigma).cdf).pvalue > 0.01
    edges, before, _ = dg.k_histogram(K, 2 * K)
    assert before.sum() == 512 and edges[-1] == pytest.approx(2 * norms.max())


def test_k_histogram_rejects_mismatch():
    with pytest.raises(ValueError):
        dg.k_histogram(np.ones((3, 2)), np.ones((4, 2)))


# --- residual and report ------------------------------------------------------------------

def zero_net():
    p = init_model("aspen", m=4, layers=2, width=5, rng=0)
    p.backbone.weights[-1].value[...] = 0.0
    return p


def test_zero_network_residual_profile():
    grid = dg.EvalGrid.uniform(PDE, 33, 5)
    prof = dg.residual_profile(zero_net(), PDE, grid)
    assert prof.shape == (33,) and np.all(prof == 0.0)


def test_eval_grid_mesh_order():
    g = dg.EvalGrid(np.array([0.0, 1.0, 2.0]), np.array([5.0, 6.0]))
    X, T = g.mesh()
    assert list(X) == [0, 1, 2, 0, 1, 2] and list(T) == [5, 5, 5, 6, 6, 6]


def small_truth():
    x = np.linspace(-10, 7.5, 65)
    t = np.linspace(0, 10, 5)
    return Field(x, t, np.tanh(-x)[None, :] * np.exp(1j * 1.3 * t)[:, None])


def test_report_roundtrip(tmp_path):
    truth = small_truth()
    p = init_model("aspen", m=4, layers=2, width=5, rng=0)
    rep = dg.build_report(p, PDE, truth, K_init=p.spectral.K.value * 0.5,
                          res_grid=dg.EvalGrid.uniform(PDE, 20, 4))
    rep.extra["seconds"] = 1.5
    dg.write_report(rep, tmp_path)
    s = dg.read_summary(tmp_path / "summary.txt")
    assert s["status"] == "ok" and s["rel_l2"] == rep.rel_l2 and s["seconds"] == 1.5
    for name, cols in dg.SCHEMAS.items():
        rows = dg.read_csv(tmp_path / name, cols)
        assert rows
    wall = dg.read_csv(tmp_path / "wall.csv")
    assert [r["x_wall_ref"] for r in wall] == pytest.approx([0.0] * 5, abs=1e-3)  # linear interpolation of tanh
    energy = dg.read_csv(tmp_path / "energy.csv")
    assert [r["F_ref"] for r in energy] == list(rep.energy_ref)


def test_diverged_report_has_reference_only(tmp_path):
    rep = dg.build_report(None, PDE, small_truth(), status="diverged")
    dg.write_report(rep, tmp_path)
    assert dg.read_summary(tmp_path / "summary.txt")["rel_l2"] is None
    assert all(r["x_wall"] is None for r in dg.read_csv(tmp_path / "wall.csv"))
    assert not (tmp_path / "k_hist.csv").exists()


def test_read_csv_checks_header(tmp_path):
    dg.write_csv(tmp_path / "a.csv", ["a", "b"], [(1, 2.5)])
    with pytest.raises(ValueError):
        dg.read_csv(tmp_path / "a.csv", ["a", "c"])
    assert dg.read_csv(tmp_path / "a.csv", ["a", "b"]) == [{"a": 1, "b": 2.5}]
