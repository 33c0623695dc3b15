"""Adam with bias correction and a one-step learning-rate decay."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError, Param


@dataclass
class StepSchedule:
    """``lr`` until ``decay_epoch``, then ``lr_final``."""

    lr: float = 1e-3
    lr_final: float = 1e-4
    decay_epoch: int = 50000

    def __call__(self, epoch: int) -> float:
        return self.lr if epoch < self.decay_epoch else self.lr_final


@dataclass
class AdamState:
    schedule: StepSchedule = field(default_factory=StepSchedule)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[Param], epoch: int = 0) -> float:
    """Apply one Adam update from ``p.grad`` in place; returns the lr used."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient for {p.name} at epoch {epoch}")
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    if len(state.m) != len(params):
        raise ValueError("parameter list changed between Adam steps")
    state.step_count += 1
    lr = state.schedule(epoch)
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step_count
    bc2 = 1.0 - b2**state.step_count
    step = lr / bc1
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= step * m / (np.sqrt(v / bc2) + state.eps)
    return lr


def adam_minimize(fun_grad, x0: np.ndarray, steps: int, lr: float = 1e-3) -> np.ndarray:
    """Minimise ``fun_grad(x) -> grad`` with constant-lr Adam (test helper)."""
    p = Param(x0, "x")
    state = AdamState(StepSchedule(lr, lr, math.inf))
    for i in range(steps):
        p.grad[...] = fun_grad(p.value)
        adam_step(state, [p], i)
    return p.value
