"""Training loop: loss assembly, RAR, curriculum, forward and inverse modes."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .config import ExperimentConfig, rng_stream
from .model import ModelParams, forward, init_model, save_checkpoint
from .optim import AdamState, StepSchedule, adam_step
from .pde import PdeSpec
from .sampling import CollocationSet, lhs_sample, sample_collocation

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "l_total", "l_res", "l_ic", "l_bc", "lr", "seconds"]
INVERSE_COLUMNS = LOG_COLUMNS + ["b", "c"]


@dataclass
class LossWeights:
    w_res: float = 1.0
    w_icbc: float = 100.0
    w_data: float = 1.0


@dataclass
class LossBreakdown:
    l_res: object
    l_ic: object
    l_bc: object
    l_total: object
    l_data: object = None

    def values(self) -> dict[str, float]:
        f = lambda v: None if v is None else float(ad._val(v))
        return {"l_total": f(self.l_total), "l_res": f(self.l_res), "l_ic": f(self.l_ic),
                "l_bc": f(self.l_bc), "l_data": f(self.l_data)}


@dataclass
class InverseProblemSetup:
    obs_x: np.ndarray
    obs_t: np.ndarray
    obs_A: np.ndarray  # complex
    w_data: float = 1.0
    b0: float = 0.1
    c0: float = -0.5

    def __post_init__(self):
        if len(self.obs_x) < 1:
            raise ValueError("need at least one observation")


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict]
    status: str = "ok"
    message: str = ""
    K_init: np.ndarray | None = None
    rar_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    rar_rounds: list[np.ndarray] = field(default_factory=list)
    trajectory: np.ndarray | None = None  # (epochs, 2) b, c in inverse mode
    b_hat: float | None = None
    c_hat: float | None = None
    b_std: float | None = None
    c_std: float | None = None
    seconds: float = 0.0


# --------------------------------------------------------------------------
# losses

def _complex_sq_err(u, v, target: np.ndarray, is_complex: bool):
    du = u - target.real
    if not is_complex:
        return ad.square(du)
    return ad.square(du) + ad.square(v - target.imag)


def _coeffs(params: ModelParams, tape):
    inv = params.inverse
    if not inv:
        return None, None
    if tape is None:
        return float(inv["b"].value), float(inv["c"].value)
    return tape.watch(inv["b"]), tape.watch(inv["c"])


def assemble_loss(params: ModelParams, pde: PdeSpec, pts: CollocationSet,
                  weights: LossWeights = LossWeights(), tape: ad.Tape | None = None,
                  smoothing: float = 1.0, inverse: InverseProblemSetup | None = None,
                  res_idx: np.ndarray | None = None, n_res_total: int | None = None,
                  boundary: bool = True) -> LossBreakdown:
    """Composite loss on the tape (or eagerly when ``tape`` is None).

    ``res_idx``/``n_res_total`` restrict the residual mean to a shard while
    keeping the global normaliser; ``boundary=False`` drops the IC/BC/data
    terms so shards can be summed.
    """
    res = pts.res if res_idx is None else pts.res[res_idx]
    n_tot = n_res_total or len(res)
    b, c = _coeffs(params, tape)
    zero = 0.0
    l_res = zero
    if len(res):
        u, v = forward(params, res[:, 0], res[:, 1], pde.slots, tape)
        r = pde.residual(u, v, b=b, c=c)
        l_res = ad.scale(ad.total(r.sq_magnitude()), 1.0 / n_tot)
    l_ic = l_bc = zero
    l_data = None
    if boundary:
        t0 = pde.t_domain[0]
        u, v = forward(params, pts.ic_x, np.full_like(pts.ic_x, t0), ad.VALUE, tape)
        target = pde.initial(pts.ic_x, smoothing)
        l_ic = ad.mean(_complex_sq_err(u.val, v.val, target, pde.is_complex))
        l_bc = _bc_loss(params, pde, pts, tape)
        if inverse is not None:
            u, v = forward(params, inverse.obs_x, inverse.obs_t, ad.VALUE, tape)
            l_data = ad.mean(_complex_sq_err(u.val, v.val, inverse.obs_A, True))
    total = ad.scale(l_res, weights.w_res) if weights.w_res != 1.0 else l_res
    total = total + ad.scale(l_ic + l_bc, weights.w_icbc)
    if l_data is not None:
        total = total + ad.scale(l_data, weights.w_data)
    return LossBreakdown(l_res, l_ic, l_bc, total, l_data)


def _bc_loss(params, pde, pts, tape):
    (x0, x1) = pde.x_domain
    t = pts.bc_t
    if pde.bc == "periodic":
        slots = ("val", "dx")
        ul, vl = forward(params, np.full_like(t, x0), t, slots, tape)
        ur, vr = forward(params, np.full_like(t, x1), t, slots, tape)
        err = ad.square(ul.val - ur.val) + ad.square(ul.dx - ur.dx)
        if pde.is_complex:
            err = err + ad.square(vl.val - vr.val) + ad.square(vl.dx - vr.dx)
        return ad.mean(err)
    gl, gr = pde.boundary_values()
    xs = np.where(pts.bc_side == 0, x0, x1)
    target = np.where(pts.bc_side == 0, gl, gr).astype(np.complex128)
    u, v = forward(params, xs, t, ad.VALUE, tape)
    return ad.mean(_complex_sq_err(u.val, v.val, target, pde.is_complex))


def loss_and_grad(params: ModelParams, pde: PdeSpec, pts: CollocationSet,
                  weights: LossWeights, smoothing: float = 1.0,
                  inverse: InverseProblemSetup | None = None,
                  shard_size: int = 0) -> dict[str, float]:
    """Zero grads, evaluate the loss and accumulate its gradient into every Param.

    With ``shard_size`` > 0 the residual points are split into shards, each on
    its own tape; gradients are summed in shard order.
    """
    params.zero_grad()
    n = pts.n_res
    if shard_size <= 0 or shard_size >= n:
        shards = [None]
    else:
        shards = [np.arange(s, min(s + shard_size, n)) for s in range(0, n, shard_size)]
    acc: dict[str, float] = {}
    for k, idx in enumerate(shards):
        tape = ad.Tape()
        lb = assemble_loss(params, pde, pts, weights, tape, smoothing, inverse,
                           res_idx=idx, n_res_total=n, boundary=(k == 0))
        tape.backward(lb.l_total)
        for key, val in lb.values().items():
            if val is not None:
                acc[key] = acc.get(key, 0.0) + val
    return acc


def residual_on_points(params: ModelParams, pde: PdeSpec, x, t, chunk: int = 8192) -> np.ndarray:
    """|f| at the given points, no tape."""
    x = np.asarray(x, float).ravel()
    t = np.asarray(t, float).ravel()
    b, c = _coeffs(params, None)
    out = np.empty(x.size)
    for s in range(0, x.size, chunk):
        u, v = forward(params, x[s:s + chunk], t[s:s + chunk], pde.slots)
        out[s:s + chunk] = np.sqrt(pde.residual(u, v, b=b, c=c).sq_magnitude())
    return out


# --------------------------------------------------------------------------
# RAR and curriculum

def rar_refine(params: ModelParams, pde: PdeSpec, pool: int, k: int,
               rng: np.random.Generator, residual_fn=None) -> np.ndarray:
    """Top-``k`` of ``pool`` fresh LHS candidates ranked by |f|^2.

    Ties break by candidate index (stable sort).  ``residual_fn(x, t)``
    overrides the model residual (used by synthetic probes).
    """
    if k <= 0 or pool <= 0:
        return np.zeros((0, 2))
    cand = lhs_sample(pool, [pde.x_domain, pde.t_domain], rng)
    if residual_fn is None:
        r = residual_on_points(params, pde, cand[:, 0], cand[:, 1])
    else:
        r = np.asarray(residual_fn(cand[:, 0], cand[:, 1]), float)
    order = np.argsort(-(r * r), kind="stable")
    return cand[order[:min(k, pool)]]


def curriculum_scale(epoch: int, epochs: int, start: float = 0.25, frac: float = 0.4) -> float:
    """IC sharpness s: linear ramp start -> 1 over the first ``frac`` of training."""
    ramp = frac * epochs
    if ramp <= 0 or epoch >= ramp:
        return 1.0
    return start + (1.0 - start) * epoch / ramp


# --------------------------------------------------------------------------
# main loop

def _write_log(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()})
    return out


def train(config: ExperimentConfig, inverse: InverseProblemSetup | None = None,
          out_dir=None, progress: bool = False) -> TrainResult:
    """Run the configured number of full-batch Adam epochs.

    Divergence (non-finite values) ends the run with ``status="diverged"``
    instead of raising.
    """
    tc = config.training
    mc = config.model
    pde = config.pde.build()
    params = init_model(mc.mode, mc.m, mc.sigma, mc.layers, mc.width,
                        pde.x_domain, pde.t_domain, rng_stream(tc.seed, "init"))
    if inverse is not None:
        params.add_inverse(inverse.b0, inverse.c0)
    K_init = params.spectral.K.value.copy() if params.spectral is not None else None
    weights = LossWeights(tc.w_res, tc.w_icbc, inverse.w_data if inverse else 0.0)
    lhs_rng = rng_stream(tc.seed, "lhs")
    rar_rng = rng_stream(tc.seed, "rar")
    pts = sample_collocation(pde, tc.n_res, tc.n_ic, tc.n_bc, lhs_rng)
    state = AdamState(StepSchedule(tc.lr, tc.lr_final, tc.decay_epoch))
    trainable = params.trainable()
    columns = INVERSE_COLUMNS if inverse is not None else LOG_COLUMNS
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    rar_pts = np.zeros((0, 2))
    rar_rounds: list[np.ndarray] = []
    traj = np.zeros((tc.epochs, 2)) if inverse is not None else None
    status, message = "ok", ""
    t_start = time.perf_counter()
    epoch = 0
    for epoch in range(tc.epochs):
        try:
            if epoch > 0 and tc.resample_every and epoch % tc.resample_every == 0:
                pts = sample_collocation(pde, tc.n_res, tc.n_ic, tc.n_bc, lhs_rng, rar_pts)
            if (tc.rar and epoch > 0 and tc.rar_every and epoch % tc.rar_every == 0
                    and len(rar_pts) < tc.rar_max):
                k = min(tc.rar_add, tc.rar_max - len(rar_pts))
                new = rar_refine(params, pde, tc.rar_pool, k, rar_rng)
                rar_rounds.append(new)
                rar_pts = np.concatenate([rar_pts, new])
                pts = pts.with_rar(new)
            s = (curriculum_scale(epoch, tc.epochs, tc.curriculum_start, tc.curriculum_frac)
                 if tc.curriculum else 1.0)
            losses = loss_and_grad(params, pde, pts, weights, s, inverse, tc.shard_size)
            lr = adam_step(state, trainable, epoch)
        except NonFiniteError as exc:
            status, message = "diverged", f"epoch {epoch}: {exc}"
            log.warning("run diverged at %s", message)
            break
        if traj is not None:
            traj[epoch] = params.inverse["b"].value, params.inverse["c"].value
        if epoch % tc.log_every == 0 or epoch == tc.epochs - 1:
            row = {"epoch": epoch, **{k: losses.get(k, 0.0) for k in ("l_total", "l_res", "l_ic", "l_bc")},
                   "lr": lr, "seconds": time.perf_counter() - t_start}
            if inverse is not None:
                row["b"] = float(params.inverse["b"].value)
                row["c"] = float(params.inverse["c"].value)
            rows.append(row)
            if progress:
                print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in row.items()), flush=True)
        if out is not None and tc.checkpoint_every and (epoch + 1) % tc.checkpoint_every == 0:
            save_checkpoint(params, out / f"checkpoint-{epoch + 1:07d}.bin", config.digest())

    result = TrainResult(params, rows, status, message, K_init, rar_pts, rar_rounds,
                         traj, seconds=time.perf_counter() - t_start)
    if inverse is not None:
        if traj is not None and status != "ok":
            result.trajectory = traj[:epoch]
        result.b_hat = float(params.inverse["b"].value)
        result.c_hat = float(params.inverse["c"].value)
        if status == "ok":
            result.b_std, result.c_std = laplace_std(params, pde, pts)
    if out is not None:
        _write_log(out / "train_log.csv", rows, columns)
    return result


# --------------------------------------------------------------------------
# inverse problem

def make_observations(field, n_obs: int, noise: float, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample grid nodes of a reference Field and add Gaussian noise.

    Noise on each component has standard deviation ``noise`` times that
    component's standard deviation over the sampled nodes.
    """
    it = rng.integers(0, field.nt, n_obs)
    ix = rng.integers(0, field.nx, n_obs)
    A = field.values[it, ix]
    noisy = (A.real + noise * A.real.std() * rng.standard_normal(n_obs)
             + 1j * (A.imag + noise * A.imag.std() * rng.standard_normal(n_obs)))
    return field.grid_x[ix].copy(), field.grid_t[it].copy(), noisy


def inverse_setup(config: ExperimentConfig, field) -> InverseProblemSetup:
    ic = config.inverse
    if ic is None:
        raise ValueError("config has no inverse block")
    x, t, A = make_observations(field, ic.n_obs, ic.noise, rng_stream(config.training.seed, "obs"))
    return InverseProblemSetup(x, t, A, ic.w_data, ic.b0, ic.c0)


def train_inverse(config: ExperimentConfig, setup: InverseProblemSetup, out_dir=None,
                  progress: bool = False) -> TrainResult:
    """Forward training with (b, c) appended to the trainable set."""
    return train(config, setup, out_dir, progress)


def laplace_std(params: ModelParams, pde: PdeSpec, pts: CollocationSet) -> tuple[float, float]:
    """Gauss-Newton/Laplace standard deviations of (b, c).

    Uses the diagonal of J^T J of the residual with respect to (b, c), scaled by
    the mean squared residual.
    """
    x, t = pts.res[:, 0], pts.res[:, 1]
    Jb = []
    Jc = []
    sq = []
    b = float(params.inverse["b"].value)
    c = float(params.inverse["c"].value)
    for s in range(0, len(x), 8192):
        u, v = forward(params, x[s:s + 8192], t[s:s + 8192], pde.slots)
        uu, vv, uxx, vxx = u.val, v.val, u.dxx, v.dxx
        rho = uu * uu + vv * vv
        # d f_re/db = v_xx, d f_im/db = -u_xx; d f_re/dc = -rho v, d f_im/dc = rho u
        Jb.append(np.concatenate([vxx, -uxx]))
        Jc.append(np.concatenate([-rho * vv, rho * uu]))
        r = pde.residual(u, v, b=b, c=c)
        sq.append(r.sq_magnitude())
    Jb, Jc = np.concatenate(Jb), np.concatenate(Jc)
    s2 = float(np.mean(np.concatenate(sq)))
    return math.sqrt(s2 / max(np.sum(Jb * Jb), 1e-300)), math.sqrt(s2 / max(np.sum(Jc * Jc), 1e-300))
