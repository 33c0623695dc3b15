import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspen import autodiff as ad
from aspen.autodiff import Jet
from aspen.pde import (allen_cahn_residual, burgers_residual, cgle_residual, kdv_residual,
                       kdv_two_soliton, make_pde, nls_residual)

from kill_cases import (GRID, cgle_tanh_front_residual, cgle_zero_residual, const_jet, coords,
                        kdv_soliton_residual, max_abs, nls_soliton_jets, nls_soliton_residual)


# --- known-solution kill tests ------------------------------------------------

def test_kill_cgle_zero():
    assert cgle_zero_residual() == 0.0


def test_kill_cgle_tanh_front_without_dispersion():
    assert cgle_tanh_front_residual() < 1e-8


def test_kill_kdv_single_soliton():
    assert kdv_soliton_residual() < 1e-8


def test_kill_nls_bright_soliton():
    assert nls_soliton_residual() < 1e-8


def test_nls_unit_amplitude_sech_is_not_a_solution():
    # sech(x) e^{it} leaves f_real = -sech^3; the exact soliton needs amplitude sqrt(2)
    r = nls_residual(*nls_soliton_jets(GRID, 0.0, amp=1.0))
    assert np.allclose(r.f_real, -(1.0 / np.cosh(GRID)) ** 3, atol=1e-12)


def test_kdv_two_soliton_satisfies_equation():
    # u_t + u u_x + u_xxx by high-order differences of the closed form
    x = np.linspace(-12, 12, 401)
    h = 1e-3
    u = kdv_two_soliton(x, 0.2)
    ut = (kdv_two_soliton(x, 0.2 + h) - kdv_two_soliton(x, 0.2 - h)) / (2 * h)
    f = lambda s: kdv_two_soliton(x + s, 0.2)
    ux = (f(h) - f(-h)) / (2 * h)
    uxxx = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h**3)
    assert np.max(np.abs(ut + u * ux + uxxx)) < 1e-3 * np.max(np.abs(ut))


# --- worked examples -------------------------------------------------------------

def test_cgle_plateau_probe():
    one, zero = const_jet(1.0), const_jet(0.0)
    r = cgle_residual(one, zero, 0.5, 0.0)
    assert np.all(r.f_real == 0) and np.all(r.f_imag == 0)
    # with c = -1.3 the cubic term leaves f_imag = c
    r = cgle_residual(one, zero, 0.5, -1.3)
    assert np.allclose(r.f_real, 0.0)
    assert np.allclose(r.f_imag, -1.3)


@settings(max_examples=200)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=6, max_size=6),
       st.floats(-2, 2), st.floats(-2, 2))
def test_cgle_decomposition_matches_complex_arithmetic(z, b, c):
    A, At, Axx = complex(z[0], z[1]), complex(z[2], z[3]), complex(z[4], z[5])
    f = At - (A + (1 + 1j * b) * Axx - (1 + 1j * c) * abs(A) ** 2 * A)
    u = Jet(np.array([[A.real], [0.0], [Axx.real], [At.real]]), ad.ORDER2)
    v = Jet(np.array([[A.imag], [0.0], [Axx.imag], [At.imag]]), ad.ORDER2)
    r = cgle_residual(u, v, b, c)
    assert r.f_real[0] == pytest.approx(f.real, abs=1e-12 * (1 + abs(f)))
    assert r.f_imag[0] == pytest.approx(f.imag, abs=1e-12 * (1 + abs(f)))


@given(st.floats(0.1, 3.0))
def test_cgle_cubic_term_scales_cubically(lam):
    # with zero derivatives f = -A + (1+ic)|A|^2 A; the cubic part scales as lam^3
    def cubic(scale):
        u, v = const_jet(0.6 * scale, 1), const_jet(-0.3 * scale, 1)
        r = cgle_residual(u, v, 0.5, -1.3)
        return r.f_real[0] + 0.6 * scale, r.f_imag[0] - 0.3 * scale
    base, scaled = cubic(1.0), cubic(lam)
    assert scaled[0] == pytest.approx(lam**3 * base[0], rel=1e-12)
    assert scaled[1] == pytest.approx(lam**3 * base[1], rel=1e-12)


def test_allen_cahn_examples():
    for val, expect in ((1.0, 0.0), (0.0, 0.0), (0.5, (0.125 - 0.5) / 0.01**2)):
        r = allen_cahn_residual(const_jet(val), 0.001, 0.01)
        assert np.allclose(r.f_real, expect)
    assert np.allclose(allen_cahn_residual(const_jet(0.5), 0.001, 0.01).f_real, -3750.0)


def test_burgers_examples():
    assert np.all(burgers_residual(const_jet(2.0), 0.01 / math.pi).f_real == 0)
    x, _ = coords(GRID, 0.0)
    assert np.allclose(burgers_residual(x, 0.01 / math.pi).f_real, GRID)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.001, 0.1))
def test_burgers_matches_scalar_formula(z, nu):
    u = Jet(np.array(z, float)[:, None], ad.ORDER2)
    f = burgers_residual(u, nu).f_real[0]
    assert f == pytest.approx(z[3] + z[0] * z[1] - nu * z[2], abs=1e-12)


def test_kdv_examples():
    assert np.all(kdv_residual(const_jet(3.0, slots=ad.ORDER3)).f_real == 0)
    x, _ = coords(GRID, 0.0, ad.ORDER3)
    assert np.allclose(kdv_residual(x).f_real, GRID)


def test_nls_examples():
    z = const_jet(0.0)
    assert max_abs(nls_residual(z, z)) == 0.0
    r = nls_residual(const_jet(1.0, 1), const_jet(0.0, 1))
    assert r.f_real[0] == 1.0 and r.f_imag[0] == 0.0


# --- PdeSpec ---------------------------------------------------------------------

@pytest.mark.parametrize("kind,order", [("CGLE", 2), ("AllenCahn", 2), ("Burgers", 2),
                                        ("KdV", 3), ("NLS", 2)])
def test_jet_order(kind, order):
    assert make_pde(kind).jet_order == order


@pytest.mark.parametrize("kind", ["CGLE", "Burgers"])
def test_dirichlet_values_match_ic_at_corners(kind):
    pde = make_pde(kind)
    gl, gr = pde.boundary_values()
    x0, x1 = pde.x_domain
    ic = pde.initial(np.array([x0, x1]))
    assert abs(ic[0] - gl) < 1e-2 and abs(ic[1] - gr) < 1e-2


@pytest.mark.parametrize("kind", ["AllenCahn", "KdV", "NLS"])
def test_periodic_kinds(kind):
    assert make_pde(kind).bc == "periodic"


def test_cgle_benchmark_setup():
    pde = make_pde("CGLE")
    assert pde.params == {"b": 0.5, "c": -1.3}
    assert pde.x_domain == (-10.0, 7.5) and pde.t_domain == (0.0, 10.0)
    assert pde.boundary_values() == (complex(math.tanh(10)), complex(math.tanh(-7.5)))
    assert np.allclose(pde.initial(np.array([0.0, 1.0])), [0.0, math.tanh(-1.0)])
    assert np.allclose(pde.initial(np.array([1.0]), smoothing=0.25), math.tanh(-0.25))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        make_pde("Heat")
