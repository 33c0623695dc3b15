"""Collocation point sets: Latin hypercube draws plus RAR additions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .pde import PdeSpec

LHS, RAR = 0, 1


def lhs_sample(n: int, domain, rng: np.random.Generator) -> np.ndarray:
    """``n`` Latin-hypercube points in the box ``domain = [(lo, hi), ...]``.

    Each axis has exactly one point in each of its ``n`` equal strata.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo = np.array([d[0] for d in domain], dtype=np.float64)
    hi = np.array([d[1] for d in domain], dtype=np.float64)
    unit = qmc.LatinHypercube(d=len(domain), rng=rng).random(n)
    return lo + unit * (hi - lo)


@dataclass
class CollocationSet:
    res: np.ndarray       # (N_res, 2) interior (x, t)
    res_tag: np.ndarray   # (N_res,) LHS or RAR
    ic_x: np.ndarray      # (N_ic,)
    bc_t: np.ndarray      # (N_bc,)
    bc_side: np.ndarray   # (N_bc,) 0 = left, 1 = right (Dirichlet only)

    @property
    def n_res(self) -> int:
        return len(self.res)

    def rar_points(self) -> np.ndarray:
        return self.res[self.res_tag == RAR]

    def with_rar(self, pts: np.ndarray) -> "CollocationSet":
        if len(pts) == 0:
            return self
        return CollocationSet(np.concatenate([self.res, pts]),
                              np.concatenate([self.res_tag, np.full(len(pts), RAR)]),
                              self.ic_x, self.bc_t, self.bc_side)


def sample_collocation(pde: PdeSpec, n_res: int, n_ic: int, n_bc: int,
                       rng: np.random.Generator, rar: np.ndarray | None = None) -> CollocationSet:
    """Fresh LHS draw of all three point sets; ``rar`` points are carried over."""
    res = lhs_sample(n_res, [pde.x_domain, pde.t_domain], rng)
    ic_x = lhs_sample(n_ic, [pde.x_domain], rng)[:, 0]
    bc_t = lhs_sample(n_bc, [pde.t_domain], rng)[:, 0]
    # alternate sides on a shuffled order so both boundaries get n_bc/2 points
    bc_side = rng.permutation(np.arange(n_bc) % 2)
    pts = CollocationSet(res, np.full(n_res, LHS), ic_x, bc_t, bc_side)
    if rar is not None:
        pts = pts.with_rar(rar)
    return pts
