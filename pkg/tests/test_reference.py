import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from aspen.pde import make_pde
from aspen.reference import (Field, SolverConfig, SolverError, cached_solve, config_hash,
                             field_key, load_field, reaction_flow, read_field_header,
                             save_field, solve, time_stepping)

from ref_checks import linear_decay_rate_errors, stationary_front_error, temporal_order


def test_stationary_front_both_schemes():
    assert stationary_front_error("CrankNicolsonFD", Nx=512, dt=2e-3, T=3.0) < 1e-3
    assert stationary_front_error("SplitStepFourier", Nx=512, dt=2e-3, T=3.0) < 1e-3


def test_linear_modes_decay_at_exact_rate():
    assert max(linear_decay_rate_errors(modes=(1, 4), Nx=128, T=1.0)) < 1e-8


def test_crank_nicolson_second_order():
    order, errs = temporal_order("CrankNicolsonFD", Nx=256, dt=2e-3, T=1.0)
    assert 1.7 <= order <= 2.3, errs


def test_schemes_agree_on_short_benchmark_run():
    pde = make_pde("CGLE", t_domain=(0.0, 1.0))
    a = solve(pde, SolverConfig(Nx=512, dt=1e-3, scheme="CrankNicolsonFD", n_snapshots=5))
    b = solve(pde, SolverConfig(Nx=512, dt=1e-3, scheme="SplitStepFourier", n_snapshots=5))
    assert np.max(np.abs(a.values - b.values)) < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(-math.pi, math.pi), st.floats(0.01, 1.0),
       st.floats(-2.0, 2.0))
def test_reaction_flow_matches_ode_integration(r, phase, tau, c):
    A0 = r * np.exp(1j * phase)

    def rhs(_, y):
        A = y[0] + 1j * y[1]
        d = A - (1 + 1j * c) * abs(A) ** 2 * A
        return [d.real, d.imag]

    sol = solve_ivp(rhs, (0, tau), [A0.real, A0.imag], rtol=1e-11, atol=1e-13)
    got = reaction_flow(np.array([A0]), tau, c)[0]
    assert abs(got - (sol.y[0, -1] + 1j * sol.y[1, -1])) < 1e-8


def test_reaction_flow_modes():
    A = np.array([0.3 + 0.4j])
    assert reaction_flow(A, 0.5, -1.3, "none")[0] == A[0]
    assert reaction_flow(A, 0.5, -1.3, "linear")[0] == pytest.approx(A[0] * math.exp(0.5))
    # the unit circle is invariant in modulus and rotates at -c
    z = reaction_flow(np.array([1.0 + 0j]), 0.7, -1.3)[0]
    assert abs(z) == pytest.approx(1.0) and np.angle(z) == pytest.approx(0.7 * 1.3)


@given(st.floats(0.5, 20.0), st.floats(1e-4, 0.05), st.integers(2, 300))
def test_time_stepping_hits_snapshots(T, dt, n):
    eff, stride, steps = time_stepping(T, dt, n)
    assert eff <= dt * (1 + 1e-9)
    assert steps == stride * (n - 1)
    assert eff * steps == pytest.approx(T)


def test_full_scale_stepping():
    eff, stride, steps = time_stepping(10.0, 1e-4, 200)
    assert steps == 100097 and eff == pytest.approx(9.99e-5, rel=1e-3)


def test_dirichlet_values_pinned():
    pde = make_pde("CGLE", t_domain=(0.0, 0.5))
    for scheme in ("CrankNicolsonFD", "SplitStepFourier"):
        f = solve(pde, SolverConfig(Nx=128, dt=1e-3, scheme=scheme, n_snapshots=3))
        assert np.all(f.values[:, 0] == complex(math.tanh(10)))
        assert np.all(f.values[:, -1] == complex(math.tanh(-7.5)))


def test_blow_up_is_reported():
    # unchecked linear growth from a large IC crosses the blow-up threshold
    pde = make_pde("CGLE", b=0.0, c=0.0, bc="periodic", t_domain=(0.0, 20.0),
                   ic=lambda x, s=1.0: 1e3 + 0 * x)
    with pytest.raises(SolverError):
        solve(pde, SolverConfig(Nx=32, dt=0.01, scheme="SplitStepFourier", reaction="linear"))


@pytest.mark.parametrize("kw,field", [(dict(dt=0.0), "dt"), (dict(dt=-1.0), "dt"),
                                      (dict(Nx=2), "Nx"), (dict(scheme="Euler"), "scheme"),
                                      (dict(reaction="cubic"), "reaction"),
                                      (dict(dt=1.0), "dt")])
def test_solver_config_validation_names_field(kw, field):
    with pytest.raises(ValueError, match=f"^{field}"):
        SolverConfig(**kw).validate()


def test_crank_nicolson_rejects_periodic():
    with pytest.raises(ValueError):
        solve(make_pde("CGLE", bc="periodic"), SolverConfig(Nx=64, dt=1e-2))


def test_field_roundtrip_and_cache(tmp_path, caplog):
    pde = make_pde("CGLE", t_domain=(0.0, 0.2))
    cfg = SolverConfig(Nx=64, dt=1e-2, n_snapshots=5)
    f, path, hit = cached_solve(pde, cfg, tmp_path)
    assert not hit
    hdr = read_field_header(path)
    assert hdr["Nx"] == 64 and hdr["dt"] == 1e-2 and hdr["Nt"] == 5
    with caplog.at_level("INFO", logger="aspen.reference"):
        g, path2, hit2 = cached_solve(pde, cfg, tmp_path)
    assert hit2 and path2 == path
    assert "cache hit" in caplog.text
    assert np.array_equal(f.values, g.values)
    assert np.array_equal(f.grid_x, g.grid_x) and np.array_equal(f.grid_t, g.grid_t)


def test_field_key_distinguishes_configs():
    pde = make_pde("CGLE")
    k1 = config_hash(field_key(pde, SolverConfig(dt=1e-4)))
    k2 = config_hash(field_key(pde, SolverConfig(dt=2e-4)))
    k3 = config_hash(field_key(make_pde("CGLE", b=0.4), SolverConfig(dt=1e-4)))
    assert len({k1, k2, k3}) == 3


def test_save_load_arbitrary_field(tmp_path):
    rng = np.random.default_rng(0)
    f = Field(np.linspace(0, 1, 7), np.linspace(0, 2, 3),
              rng.normal(size=(3, 7)) + 1j * rng.normal(size=(3, 7)))
    save_field(f, tmp_path / "f.bin")
    g = load_field(tmp_path / "f.bin")
    assert np.array_equal(f.values, g.values)
    assert f.row(1.1) is not None and np.array_equal(g.row(0.9), f.values[1])
