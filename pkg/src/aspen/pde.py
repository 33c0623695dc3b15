"""PDE residuals over coordinate jets.

Every residual is written once against values that may be plain arrays or
tape nodes, so the same code serves training (gradients through b, c in the
inverse problem) and no-grad evaluation.  Complex fields are handled as
explicit (u, v) = (Re, Im) pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Jet

KINDS = ("CGLE", "AllenCahn", "Burgers", "KdV", "NLS")

_DEFAULT_PARAMS = {
    "CGLE": {"b": 0.5, "c": -1.3},
    "AllenCahn": {"D": 0.001, "eps": 0.01},
    "Burgers": {"nu": 0.01 / math.pi},
    "KdV": {},
    "NLS": {},
}

_DEFAULT_DOMAIN = {
    "CGLE": ((-10.0, 7.5), (0.0, 10.0)),
    "AllenCahn": ((-1.0, 1.0), (0.0, 1.0)),
    "Burgers": ((-1.0, 1.0), (0.0, 1.0)),
    "KdV": ((-10.0, 10.0), (0.0, 1.0)),
    "NLS": ((-5.0, 5.0), (0.0, math.pi / 2)),
}

COMPLEX_KINDS = ("CGLE", "NLS")


@dataclass
class Residual:
    f_real: object
    f_imag: object = 0.0

    def sq_magnitude(self):
        """|f|^2 = f_real^2 + f_imag^2 (the quantity averaged in L_res)."""
        if isinstance(self.f_imag, float) and self.f_imag == 0.0:
            return ad.square(self.f_real)
        return ad.square(self.f_real) + ad.square(self.f_imag)


def kdv_two_soliton(x, t=0.0, k1=1.0, k2=0.6, x1=-4.0, x2=2.0):
    """Exact two-soliton of u_t + u u_x + u_xxx = 0, u = 12 (ln F)_xx (Hirota form).

    Each isolated soliton is 12 k^2 sech^2(k (x - x_i - 4 k^2 t)).
    """
    x = np.asarray(x, dtype=np.float64)
    K1, K2 = 2.0 * k1, 2.0 * k2
    E1 = np.exp(K1 * (x - x1) - K1**3 * t)
    E2 = np.exp(K2 * (x - x2) - K2**3 * t)
    E12 = ((K1 - K2) / (K1 + K2)) ** 2 * E1 * E2
    F = 1.0 + E1 + E2 + E12
    Fx = K1 * E1 + K2 * E2 + (K1 + K2) * E12
    Fxx = K1**2 * E1 + K2**2 * E2 + (K1 + K2) ** 2 * E12
    return 12.0 * (Fxx / F - (Fx / F) ** 2)


@dataclass
class PdeSpec:
    """A PDE benchmark: kind, coefficients, domain, IC and boundary data."""

    kind: str
    params: dict = field(default_factory=dict)
    x_domain: tuple[float, float] = (-10.0, 7.5)
    t_domain: tuple[float, float] = (0.0, 10.0)
    bc: str = "dirichlet"  # or "periodic"
    bc_left: complex = 0.0
    bc_right: complex = 0.0
    ic: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown PDE kind {self.kind!r}")

    @property
    def jet_order(self) -> int:
        return 3 if self.kind == "KdV" else 2

    @property
    def slots(self) -> tuple[str, ...]:
        return ad.ORDER3 if self.jet_order == 3 else ad.ORDER2

    @property
    def is_complex(self) -> bool:
        return self.kind in COMPLEX_KINDS

    def initial(self, x, smoothing: float = 1.0) -> np.ndarray:
        """Initial condition; ``smoothing`` < 1 widens the CGLE front (curriculum)."""
        x = np.asarray(x, dtype=np.float64)
        if self.ic is not None:
            return np.asarray(self.ic(x, smoothing), dtype=np.complex128)
        if self.kind == "CGLE":
            return np.tanh(-smoothing * x) + 0j
        if self.kind == "AllenCahn":
            return x**2 * np.cos(np.pi * x) + 0j
        if self.kind == "Burgers":
            return -np.sin(np.pi * x) + 0j
        if self.kind == "KdV":
            return kdv_two_soliton(x) + 0j
        return 1.0 / np.cosh(x) + 0j  # NLS bright soliton sech(x)

    def boundary_values(self) -> tuple[complex, complex]:
        return complex(self.bc_left), complex(self.bc_right)

    def residual(self, u: Jet, v: Jet | None = None, b=None, c=None) -> Residual:
        """Residual of this PDE; ``b``/``c`` override CGLE coefficients (inverse mode)."""
        p = self.params
        if self.kind == "CGLE":
            return cgle_residual(u, v, p["b"] if b is None else b, p["c"] if c is None else c)
        if self.kind == "AllenCahn":
            return allen_cahn_residual(u, p["D"], p["eps"])
        if self.kind == "Burgers":
            return burgers_residual(u, p["nu"])
        if self.kind == "KdV":
            return kdv_residual(u)
        return nls_residual(u, v)


def make_pde(kind: str, **overrides) -> PdeSpec:
    """PdeSpec with the benchmark defaults for ``kind``; keyword overrides apply."""
    if kind not in KINDS:
        raise ValueError(f"unknown PDE kind {kind!r}")
    params = dict(_DEFAULT_PARAMS[kind])
    for key in list(overrides):
        if key in params:
            params[key] = overrides.pop(key)
    xd, td = _DEFAULT_DOMAIN[kind]
    kw = dict(kind=kind, params=params, x_domain=xd, t_domain=td)
    if kind == "CGLE":
        kw.update(bc="dirichlet", bc_left=math.tanh(10.0), bc_right=math.tanh(-7.5))
    elif kind == "Burgers":
        kw.update(bc="dirichlet", bc_left=0.0, bc_right=0.0)
    else:
        kw.update(bc="periodic")
    kw.update(overrides)
    return PdeSpec(**kw)


def cgle_residual(u: Jet, v: Jet, b, c) -> Residual:
    """f = A_t - (A + (1+ib) A_xx - (1+ic)|A|^2 A), split into real/imag parts."""
    uu, vv = u.val, v.val
    rho = ad.square(uu) + ad.square(vv)
    uxx, vxx = u.dxx, v.dxx
    f_re = u.dt - uu - (uxx - b * vxx) + rho * (uu - c * vv)
    f_im = v.dt - vv - (vxx + b * uxx) + rho * (vv + c * uu)
    return Residual(f_re, f_im)


def allen_cahn_residual(u: Jet, D: float, eps: float) -> Residual:
    uu = u.val
    return Residual(u.dt - D * u.dxx + (1.0 / eps**2) * (ad.square(uu) * uu - uu))


def burgers_residual(u: Jet, nu: float) -> Residual:
    return Residual(u.dt + u.val * u.dx - nu * u.dxx)


def kdv_residual(u: Jet) -> Residual:
    return Residual(u.dt + u.val * u.dx + u.dxxx)


def nls_residual(u: Jet, v: Jet) -> Residual:
    """i psi_t + psi_xx + |psi|^2 psi with psi = u + i v."""
    uu, vv = u.val, v.val
    rho = ad.square(uu) + ad.square(vv)
    return Residual(u.dxx - v.dt + rho * uu, u.dt + v.dxx + rho * vv)
