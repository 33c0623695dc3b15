"""ASPEN network: adaptive spectral input layer plus a tanh MLP backbone.

Three modes share one backbone shape:

* ``aspen``          trainable frequency matrix K
* ``fixed_fourier``  K drawn once and frozen
* ``baseline``       raw (x, t) fed straight to the MLP

Inputs are affinely rescaled to [-1, 1] before entering the network; the
rescaling factors are folded into the coordinate jet seeds, so K is measured
in cycles per normalised unit.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Jet, Param

MODES = ("aspen", "fixed_fourier", "baseline")


@dataclass
class SpectralLayer:
    K: Param  # (m, 2)
    trainable: bool = True

    @property
    def m(self) -> int:
        return self.K.value.shape[0]

    @property
    def out_dim(self) -> int:
        return 2 * self.m


@dataclass
class MlpBackbone:
    weights: list[Param]  # (out, in)
    biases: list[Param]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.value.shape for w in self.weights]


@dataclass
class ModelParams:
    mode: str
    spectral: SpectralLayer | None
    backbone: MlpBackbone
    x_domain: tuple[float, float]
    t_domain: tuple[float, float]
    inverse: dict[str, Param] = field(default_factory=dict)

    def trainable(self) -> list[Param]:
        """Parameters seen by the optimiser, in a stable order."""
        out = []
        if self.spectral is not None and self.spectral.trainable:
            out.append(self.spectral.K)
        for w, b in zip(self.backbone.weights, self.backbone.biases):
            out += [w, b]
        out += [self.inverse[k] for k in sorted(self.inverse)]
        return out

    def all_params(self) -> list[Param]:
        """Every array, frozen K included (checkpoint order)."""
        out = []
        if self.spectral is not None:
            out.append(self.spectral.K)
        for w, b in zip(self.backbone.weights, self.backbone.biases):
            out += [w, b]
        out += [self.inverse[k] for k in sorted(self.inverse)]
        return out

    def n_trainable(self) -> int:
        return sum(p.size for p in self.trainable())

    def zero_grad(self) -> None:
        for p in self.all_params():
            p.zero_grad()

    def flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.trainable()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([p.grad.ravel() for p in self.trainable()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for p in self.trainable():
            p.value[...] = vec[i:i + p.size].reshape(p.value.shape)
            i += p.size

    def _reindex(self) -> None:
        off = 0
        for p in self.trainable():
            p.offset = off
            off += p.size

    def add_inverse(self, b0: float, c0: float) -> None:
        """Promote the CGLE coefficients (b, c) to trainable scalars."""
        self.inverse = {"b": Param(b0, "b"), "c": Param(c0, "c")}
        self._reindex()

    def copy(self) -> "ModelParams":
        spectral = None
        if self.spectral is not None:
            spectral = SpectralLayer(Param(self.spectral.K.value, "K"), self.spectral.trainable)
        bb = MlpBackbone([Param(w.value, w.name) for w in self.backbone.weights],
                         [Param(b.value, b.name) for b in self.backbone.biases])
        out = ModelParams(self.mode, spectral, bb, self.x_domain, self.t_domain,
                          {k: Param(v.value, v.name) for k, v in self.inverse.items()})
        out._reindex()
        return out


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def init_model(mode: str = "aspen", m: int = 128, sigma: float = 10.0,
               layers: int = 8, width: int = 40,
               x_domain=(-10.0, 7.5), t_domain=(0.0, 10.0),
               rng: np.random.Generator | int = 0) -> ModelParams:
    """Fresh parameters: K ~ N(0, sigma^2), Glorot-uniform weights, zero biases.

    ``layers`` counts hidden tanh layers of ``width`` neurons; the output layer
    is linear with two units (Re A, Im A).
    """
    if mode not in MODES:
        raise ValueError(f"unknown model mode {mode!r}")
    if m < 1 or layers < 1 or width < 1:
        raise ValueError("m, layers and width must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    spectral = None
    n_in = 2
    if mode != "baseline":
        K = rng.normal(0.0, 1.0, size=(m, 2)) * sigma
        spectral = SpectralLayer(Param(K, "K"), trainable=(mode == "aspen"))
        n_in = 2 * m
    weights, biases = [], []
    dims = [n_in] + [width] * layers + [2]
    for i in range(len(dims) - 1):
        weights.append(Param(glorot_uniform(rng, dims[i + 1], dims[i]), f"W{i}"))
        biases.append(Param(np.zeros(dims[i + 1]), f"b{i}"))
    params = ModelParams(mode, spectral, MlpBackbone(weights, biases),
                         tuple(map(float, x_domain)), tuple(map(float, t_domain)))
    params._reindex()
    return params


def expected_param_count(mode: str, m: int, layers: int, width: int) -> int:
    """Closed-form count of trainable scalars."""
    n_in = 2 * m if mode != "baseline" else 2
    count = (n_in * width + width) + (layers - 1) * (width * width + width) + (width * 2 + 2)
    if mode == "aspen":
        count += 2 * m
    return count


def _normalise(params: ModelParams, x, t):
    (x0, x1), (t0, t1) = params.x_domain, params.t_domain
    sx, st = 2.0 / (x1 - x0), 2.0 / (t1 - t0)
    return (np.asarray(x, float) - x0) * sx - 1.0, (np.asarray(t, float) - t0) * st - 1.0, sx, st


def input_jet(params: ModelParams, x, t, slots=ad.ORDER2) -> Jet:
    """Jet of the normalised input pair, shape (S, N, 2)."""
    xn, tn, sx, st = _normalise(params, x, t)
    jx = ad.jet_lift_coordinate("x", xn, slots, sx)
    jt = ad.jet_lift_coordinate("t", tn, slots, st)
    return Jet(np.stack([jx.data, jt.data], axis=-1), slots)


def _p(tape, p: Param):
    return tape.watch(p) if tape is not None else p.value


def spectral_features(v: Jet, K, tape=None) -> Jet:
    """[cos(2 pi K v), sin(2 pi K v)] with exact jet slots; output width 2m.

    ``K`` is a Param (watched when ``tape`` is given) or a plain (m, 2) array.
    """
    Kv = _p(tape, K) if isinstance(K, Param) else K
    z = ad.jet_scale(ad.jet_linear(v, Kv), 2.0 * math.pi)
    return ad.jet_cos_sin(z)


def forward(params: ModelParams, x, t, slots=ad.ORDER2, tape=None) -> tuple[Jet, Jet]:
    """Network output jets (u, v) = (Re A_hat, Im A_hat) at points (x, t)."""
    h = input_jet(params, x, t, slots)
    if params.spectral is not None:
        K = params.spectral.K
        Kv = _p(tape, K) if params.spectral.trainable else K.value
        h = spectral_features(h, Kv)
    bb = params.backbone
    n = len(bb.weights)
    for i, (w, b) in enumerate(zip(bb.weights, bb.biases)):
        h = ad.jet_linear(h, _p(tape, w), _p(tape, b))
        if i < n - 1:
            h = ad.jet_tanh(h)
    return ad.jet_column(h, 0), ad.jet_column(h, 1)


def plain_forward(params: ModelParams, x, t) -> tuple[np.ndarray, np.ndarray]:
    """Value-only evaluation, independent of the jet machinery."""
    xn, tn, _, _ = _normalise(params, x, t)
    h = np.stack([xn, tn], axis=-1)
    if params.spectral is not None:
        z = 2.0 * math.pi * h @ params.spectral.K.value.T
        h = np.concatenate([np.cos(z), np.sin(z)], axis=-1)
    bb = params.backbone
    n = len(bb.weights)
    for i, (w, b) in enumerate(zip(bb.weights, bb.biases)):
        h = h @ w.value.T + b.value
        if i < n - 1:
            h = np.tanh(h)
    return h[..., 0], h[..., 1]


def predict(params: ModelParams, x, t, chunk: int = 65536) -> np.ndarray:
    """Complex prediction A_hat at points, evaluated in chunks."""
    x = np.asarray(x, float).ravel()
    t = np.broadcast_to(np.asarray(t, float), x.shape).ravel()
    out = np.empty(x.shape, dtype=np.complex128)
    for s in range(0, x.size, chunk):
        u, v = plain_forward(params, x[s:s + chunk], t[s:s + chunk])
        out[s:s + chunk] = u + 1j * v
    return out


# --------------------------------------------------------------------------
# checkpoints
#
# Layout: b"ASPENCKPT1\n", one line of JSON header, then the float64
# little-endian payload of every array in header order.  Header keys:
# mode, trainable_K, x_domain, t_domain, config_hash, arrays=[[name, shape]...].

_CKPT_MAGIC = b"ASPENCKPT1\n"


def save_checkpoint(params: ModelParams, path, config_hash: str = "") -> str:
    """Write a checkpoint and return the sha256 of its bytes."""
    arrays = params.all_params()
    header = {
        "mode": params.mode,
        "trainable_K": bool(params.spectral.trainable) if params.spectral else False,
        "x_domain": list(params.x_domain),
        "t_domain": list(params.t_domain),
        "config_hash": config_hash,
        "arrays": [[p.name, list(p.value.shape)] for p in arrays],
        "inverse": sorted(params.inverse),
    }
    blob = _CKPT_MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n"
    blob += b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in arrays)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    blob = Path(path).read_bytes()
    if not blob.startswith(_CKPT_MAGIC):
        raise ValueError(f"{path}: not an ASPEN checkpoint")
    rest = blob[len(_CKPT_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    payload = rest[nl + 1:]
    vals, pos = [], 0
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        vals.append((name, np.frombuffer(payload, "<f8", n, pos).reshape(shape).copy()))
        pos += 8 * n
    if pos != len(payload):
        raise ValueError(f"{path}: payload size mismatch")
    it = iter(vals)
    spectral = None
    if header["mode"] != "baseline":
        _, K = next(it)
        spectral = SpectralLayer(Param(K, "K"), header["trainable_K"])
    n_inv = len(header.get("inverse", []))
    rest_vals = list(it)
    core = rest_vals[:len(rest_vals) - n_inv]
    weights = [Param(v, n) for n, v in core[0::2]]
    biases = [Param(v, n) for n, v in core[1::2]]
    params = ModelParams(header["mode"], spectral, MlpBackbone(weights, biases),
                         tuple(header["x_domain"]), tuple(header["t_domain"]))
    for name, v in rest_vals[len(core):]:
        params.inverse[name] = Param(v, name)
    params._reindex()
    return params, header
