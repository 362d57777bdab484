"""Adam with L2 regularization on every parameter."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelHead


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class AdamState:
    """Moment estimates plus hyperparameters.

    With ``decoupled=False`` (default) the L2 term is added to the gradient
    before the moment updates. ``decoupled=True`` switches to AdamW-style
    decay, applied directly to the parameters, for sensitivity checks.
    """

    lr: float
    l2: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decoupled: bool = False
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not self.l2 >= 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


def init_state(head: ModelHead, lr: float, l2: float = 0.0, **hyper) -> AdamState:
    zeros = {k: np.zeros_like(v) for k, v in head.params.items()}
    return AdamState(lr=lr, l2=l2, m=zeros, v={k: np.zeros_like(v) for k, v in head.params.items()}, **hyper)


def adam_step(head: ModelHead, grads: dict[str, np.ndarray], state: AdamState) -> tuple[ModelHead, AdamState]:
    if set(grads) != set(head.params):
        raise ValueError(f"gradient names {sorted(grads)} do not match parameters {sorted(head.params)}")
    for name, g in grads.items():
        g = np.asarray(g)
        if g.shape != head.params[name].shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, parameter has {head.params[name].shape}")
        if not np.isfinite(g).all():
            bad = int(np.flatnonzero(~np.isfinite(g.ravel()))[0])
            raise NonFiniteGradientError(f"non-finite gradient in {name} at flat index {bad}; step rejected")
    if not state.m:
        state = init_state(head, state.lr, state.l2, beta1=state.beta1, beta2=state.beta2,
                           eps=state.eps, decoupled=state.decoupled)

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in head.params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if state.l2 and not state.decoupled:
            g = g + state.l2 * theta
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.decoupled and state.l2:
            update = update + state.l2 * theta
        new_params[name] = theta - state.lr * update
        new_m[name] = m
        new_v[name] = v
    new_state = AdamState(state.lr, state.l2, b1, b2, state.eps, state.decoupled, t, new_m, new_v)
    return ModelHead(head.kind, new_params), new_state
