"""Classical CGLE solvers producing ground-truth fields.

* :func:`solve_crank_nicolson` - second-order finite differences in space,
  Crank-Nicolson for the complex diffusion term, Adams-Bashforth-2 for the
  reaction term, Dirichlet rows pinned.
* :func:`solve_split_step` - Strang splitting: exact pointwise reaction flow
  (closed form), exact linear flow in spectral space.  Periodic problems use
  the FFT; Dirichlet problems use a sine transform of the deviation from the
  linear interpolant of the boundary data.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.sparse
import scipy.sparse.linalg

from .pde import PdeSpec, make_pde

log = logging.getLogger(__name__)

SCHEMES = ("SplitStepFourier", "CrankNicolsonFD")
REACTIONS = ("full", "linear", "none")
BLOWUP = 1e6
# explicit AB2 reaction step; the reaction Jacobian is O(|1+ic|) near |A| = 1
MAX_DT = 0.05


class SolverError(RuntimeError):
    pass


@dataclass
class Field:
    """Complex solution on a uniform grid; ``values[k]`` is the snapshot at ``grid_t[k]``."""

    grid_x: np.ndarray
    grid_t: np.ndarray
    values: np.ndarray  # (Nt, Nx) complex
    pde: PdeSpec | None = None
    meta: dict | None = None

    @property
    def nx(self) -> int:
        return self.grid_x.size

    @property
    def nt(self) -> int:
        return self.grid_t.size

    @property
    def dx(self) -> float:
        return float(self.grid_x[1] - self.grid_x[0])

    def row(self, t: float) -> np.ndarray:
        """Snapshot nearest to time ``t``."""
        return self.values[int(np.argmin(np.abs(self.grid_t - t)))]


@dataclass
class SolverConfig:
    Nx: int = 1024
    dt: float = 1e-4
    scheme: str = "CrankNicolsonFD"
    n_snapshots: int = 200
    reaction: str = "full"

    def validate(self) -> None:
        if self.Nx < 4:
            raise ValueError("Nx must be >= 4")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.dt > MAX_DT:
            raise ValueError(f"dt must be <= {MAX_DT} for the explicit reaction step")
        if self.n_snapshots < 2:
            raise ValueError("n_snapshots must be >= 2")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.reaction not in REACTIONS:
            raise ValueError(f"reaction must be one of {REACTIONS}, got {self.reaction!r}")


def time_stepping(T: float, dt: float, n_snapshots: int) -> tuple[float, int, int]:
    """(effective dt, stride, total steps) so snapshots land on steps exactly.

    The effective step never exceeds the requested one.
    """
    intervals = n_snapshots - 1
    stride = max(1, math.ceil(T / dt / intervals - 1e-9))
    steps = stride * intervals
    return T / steps, stride, steps


def _reaction(A, c: float, mode: str):
    if mode == "none":
        return np.zeros_like(A)
    if mode == "linear":
        return A
    return A - (1 + 1j * c) * (A.real**2 + A.imag**2) * A


def reaction_flow(A, tau: float, c: float, mode: str = "full"):
    """Exact solution of dA/dt = A - (1+ic)|A|^2 A after time ``tau``.

    With rho = |A|^2: rho(t) = rho0 e^{2t} / D, D = 1 + rho0 (e^{2t} - 1), and
    A(t) = A0 e^t D^{-(1+ic)/2}.
    """
    if mode == "none":
        return A
    et = math.exp(tau)
    if mode == "linear":
        return A * et
    rho0 = A.real**2 + A.imag**2
    logD = np.log1p(rho0 * math.expm1(2.0 * tau))
    return A * (et * np.exp(-0.5 * (1.0 + 1j * c) * logD))


def _grid(pde: PdeSpec, Nx: int) -> np.ndarray:
    x0, x1 = pde.x_domain
    if pde.bc == "periodic":
        return x0 + (x1 - x0) * np.arange(Nx) / Nx
    return np.linspace(x0, x1, Nx)


def _initial(pde: PdeSpec, x):
    A = np.asarray(pde.initial(x), dtype=np.complex128).copy()
    if pde.bc == "dirichlet":
        A[0], A[-1] = pde.boundary_values()
    return A


def _guard(A, step: int):
    amax = np.max(np.abs(A))
    if not np.isfinite(amax) or amax > BLOWUP:
        raise SolverError(f"blow-up: max|A| = {amax:.3g} at step {step}")


def _cgle_params(pde: PdeSpec) -> tuple[float, float]:
    if pde.kind != "CGLE":
        raise ValueError("reference solvers handle the CGLE only")
    return float(pde.params["b"]), float(pde.params["c"])


def solve_split_step(pde: PdeSpec, cfg: SolverConfig) -> Field:
    """Strang split-step spectral solver: R(dt/2) L(dt) R(dt/2)."""
    cfg.validate()
    b, c = _cgle_params(pde)
    x = _grid(pde, cfg.Nx)
    T = pde.t_domain[1] - pde.t_domain[0]
    dt, stride, steps = time_stepping(T, cfg.dt, cfg.n_snapshots)
    A = _initial(pde, x)
    L = pde.x_domain[1] - pde.x_domain[0]

    if pde.bc == "periodic":
        k = 2 * np.pi * np.fft.fftfreq(cfg.Nx, d=L / cfg.Nx)
        prop = np.exp(-(1 + 1j * b) * k**2 * dt)

        def linear(A):
            return np.fft.ifft(prop * np.fft.fft(A))

        interior = slice(None)
    else:
        n = cfg.Nx - 2
        k = np.pi * np.arange(1, n + 1) / L
        prop = np.exp(-(1 + 1j * b) * k**2 * dt)
        gl, gr = pde.boundary_values()
        g = gl + (gr - gl) * (x - x[0]) / L
        gi = g[1:-1]

        def linear(A):
            w = A[1:-1] - gi
            w = scipy.fft.idst(prop * scipy.fft.dst(w, type=1), type=1)
            out = A.copy()
            out[1:-1] = w + gi
            return out

        interior = slice(1, -1)

    snaps = np.empty((cfg.n_snapshots, cfg.Nx), dtype=np.complex128)
    snaps[0] = A
    half = 0.5 * dt
    for s in range(1, steps + 1):
        A[interior] = reaction_flow(A[interior], half, c, cfg.reaction)
        A = linear(A)
        A[interior] = reaction_flow(A[interior], half, c, cfg.reaction)
        if s % stride == 0:
            _guard(A, s)
            snaps[s // stride] = A
    meta = dict(scheme="SplitStepFourier", dt=dt, Nx=cfg.Nx, steps=steps)
    return Field(x, np.linspace(pde.t_domain[0], pde.t_domain[1], cfg.n_snapshots),
                 snaps, pde, meta)


def solve_crank_nicolson(pde: PdeSpec, cfg: SolverConfig) -> Field:
    """CN for (1+ib) A_xx, AB2 for the reaction, Dirichlet rows pinned."""
    cfg.validate()
    if pde.bc != "dirichlet":
        raise ValueError("Crank-Nicolson solver requires Dirichlet boundaries")
    b, c = _cgle_params(pde)
    x = _grid(pde, cfg.Nx)
    dx = x[1] - x[0]
    T = pde.t_domain[1] - pde.t_domain[0]
    dt, stride, steps = time_stepping(T, cfg.dt, cfg.n_snapshots)
    A = _initial(pde, x)
    n = cfg.Nx - 2
    alpha = (1 + 1j * b) * dt / (2 * dx * dx)
    main = np.full(n, 1 + 2 * alpha)
    off = np.full(n - 1, -alpha)
    M = scipy.sparse.diags([off, main, off], [-1, 0, 1], format="csc")
    lu = scipy.sparse.linalg.splu(M)
    if np.any(np.abs(lu.U.diagonal()) < 1e-14):
        raise SolverError("singular Crank-Nicolson matrix")

    snaps = np.empty((cfg.n_snapshots, cfg.Nx), dtype=np.complex128)
    snaps[0] = A
    N_prev = _reaction(A[1:-1], c, cfg.reaction)
    left, right = A[0], A[-1]
    for s in range(1, steps + 1):
        Ai = A[1:-1]
        N_now = _reaction(Ai, c, cfg.reaction)
        # Euler on the first step, AB2 afterwards
        N_mid = N_now if s == 1 else 1.5 * N_now - 0.5 * N_prev
        lap = A[2:] - 2 * Ai + A[:-2]
        rhs = Ai + alpha * lap + dt * N_mid
        rhs[0] += alpha * left
        rhs[-1] += alpha * right
        A[1:-1] = lu.solve(rhs)
        N_prev = N_now
        if s % stride == 0:
            _guard(A, s)
            snaps[s // stride] = A
    meta = dict(scheme="CrankNicolsonFD", dt=dt, Nx=cfg.Nx, steps=steps)
    return Field(x, np.linspace(pde.t_domain[0], pde.t_domain[1], cfg.n_snapshots),
                 snaps, pde, meta)


def solve(pde: PdeSpec, cfg: SolverConfig) -> Field:
    if cfg.scheme == "SplitStepFourier":
        return solve_split_step(pde, cfg)
    return solve_crank_nicolson(pde, cfg)


# --------------------------------------------------------------------------
# cache files
#
# Layout: b"ASPENFIELD1\n", one JSON header line, then the (Nt, Nx) complex128
# little-endian payload in row-major order (row k = snapshot k).  Header keys:
# Nx, Nt, x_domain, t_domain, bc, pde, params, scheme, dt, reaction, grid.

_FIELD_MAGIC = b"ASPENFIELD1\n"


def field_key(pde: PdeSpec, cfg: SolverConfig) -> dict:
    return {
        "pde": pde.kind,
        "params": {k: float(v) for k, v in sorted(pde.params.items())},
        "x_domain": list(map(float, pde.x_domain)),
        "t_domain": list(map(float, pde.t_domain)),
        "bc": pde.bc,
        "bc_values": [repr(complex(v)) for v in pde.boundary_values()],
        "ic": "custom" if pde.ic is not None else "default",
        "solver": asdict(cfg),
    }


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def save_field(field: Field, path, key: dict | None = None) -> None:
    pde = field.pde
    header = {
        "Nx": field.nx,
        "Nt": field.nt,
        "x_domain": [float(field.grid_x[0]), float(field.grid_x[-1])],
        "t_domain": [float(field.grid_t[0]), float(field.grid_t[-1])],
        "grid": "periodic" if pde is not None and pde.bc == "periodic" else "endpoints",
        "pde": pde.kind if pde else None,
        "params": dict(pde.params) if pde else {},
        "bc": pde.bc if pde else None,
        "scheme": (field.meta or {}).get("scheme"),
        "dt": (field.meta or {}).get("dt"),
        "key": key,
    }
    if header["grid"] == "periodic":
        header["x_domain"] = list(map(float, pde.x_domain))
    blob = _FIELD_MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n"
    blob += np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def read_field_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.readline() != _FIELD_MAGIC:
            raise ValueError(f"{path}: not an ASPEN field file")
        return json.loads(fh.readline())


def load_field(path, pde: PdeSpec | None = None) -> Field:
    blob = Path(path).read_bytes()
    if not blob.startswith(_FIELD_MAGIC):
        raise ValueError(f"{path}: not an ASPEN field file")
    rest = blob[len(_FIELD_MAGIC):]
    nl = rest.index(b"\n")
    h = json.loads(rest[:nl])
    vals = np.frombuffer(rest[nl + 1:], dtype="<c16")
    if vals.size != h["Nx"] * h["Nt"]:
        raise ValueError(f"{path}: payload size mismatch")
    x0, x1 = h["x_domain"]
    if h["grid"] == "periodic":
        x = x0 + (x1 - x0) * np.arange(h["Nx"]) / h["Nx"]
    else:
        x = np.linspace(x0, x1, h["Nx"])
    t = np.linspace(h["t_domain"][0], h["t_domain"][1], h["Nt"])
    meta = {"scheme": h["scheme"], "dt": h["dt"], "Nx": h["Nx"]}
    return Field(x, t, vals.reshape(h["Nt"], h["Nx"]).copy(), pde, meta)


def default_cache_dir() -> Path:
    return Path(os.environ.get("ASPEN_CACHE_DIR", Path.home() / ".cache" / "aspen"))


def cached_solve(pde: PdeSpec, cfg: SolverConfig, cache_dir=None) -> tuple[Field, Path, bool]:
    """Solve or load from cache.  Returns (field, path, hit)."""
    cfg.validate()
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = field_key(pde, cfg)
    path = cache_dir / f"field-{config_hash(key)}.bin"
    if path.exists():
        log.info("reference cache hit: %s", path)
        return load_field(path, pde), path, True
    log.info("reference cache miss: solving (%s, Nx=%d, dt=%g)", cfg.scheme, cfg.Nx, cfg.dt)
    field = solve(pde, cfg)
    save_field(field, path, key)
    return field, path, False


def paper_ground_truth(cache_dir=None, pde: PdeSpec | None = None,
                       cfg: SolverConfig | None = None) -> Field:
    """CGLE benchmark truth: b=0.5, c=-1.3, x in [-10, 7.5], t in [0, 10].

    Crank-Nicolson at Nx=1024, dt=1e-4, 200 stored snapshots, cached on disk.
    """
    pde = pde or make_pde("CGLE")
    cfg = cfg or SolverConfig(Nx=1024, dt=1e-4, scheme="CrankNicolsonFD", n_snapshots=200)
    return cached_solve(pde, cfg, cache_dir)[0]
