"""Six first-order optimizers over a ParamSet.

All moment-based updates use the textbook rules with coupled L2
regularization (gradient += weight_decay * param), except AdamW whose
decay is decoupled and applied directly to the parameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ParamSet

OPTIMIZER_KINDS = ("Adadelta", "Adagrad", "Adam", "AdamW", "RMSprop", "SGD")

EPS = 1e-8
ADAM_BETAS = (0.9, 0.999)
RMSPROP_ALPHA = 0.99
ADADELTA_RHO = 0.9


class OptimError(ValueError):
    pass


@dataclass
class OptimState:
    kind: str
    lr: float
    weight_decay: float = 0.0
    step: int = 0
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise OptimError(f"unknown optimizer {self.kind!r}")

    def _buf(self, name: str, like: np.ndarray, *keys: str):
        slot = self.buffers.setdefault(name, {})
        for k in keys:
            if k not in slot:
                slot[k] = np.zeros_like(like)
        return slot


def optimizer_step(state: OptimState, params: ParamSet, grads: ParamSet) -> None:
    """One in-place update of params (and state) from grads."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise OptimError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    lr, wd = state.lr, state.weight_decay
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise OptimError(f"gradient shape mismatch for {name!r}")
        kind = state.kind
        if kind == "SGD":
            p -= lr * (g + wd * p)
        elif kind == "Adam" or kind == "AdamW":
            if kind == "AdamW":
                p -= lr * wd * p
            else:
                g = g + wd * p
            b1, b2 = ADAM_BETAS
            buf = state._buf(name, p, "m", "v")
            buf["m"] *= b1
            buf["m"] += (1 - b1) * g
            buf["v"] *= b2
            buf["v"] += (1 - b2) * g * g
            mhat = buf["m"] / (1 - b1**t)
            vhat = buf["v"] / (1 - b2**t)
            p -= lr * mhat / (np.sqrt(vhat) + EPS)
        elif kind == "Adagrad":
            g = g + wd * p
            buf = state._buf(name, p, "acc")
            buf["acc"] += g * g
            p -= lr * g / (np.sqrt(buf["acc"]) + EPS)
        elif kind == "RMSprop":
            g = g + wd * p
            buf = state._buf(name, p, "sq")
            buf["sq"] *= RMSPROP_ALPHA
            buf["sq"] += (1 - RMSPROP_ALPHA) * g * g
            p -= lr * g / (np.sqrt(buf["sq"]) + EPS)
        elif kind == "Adadelta":
            g = g + wd * p
            buf = state._buf(name, p, "acc", "delta_acc")
            rho = ADADELTA_RHO
            buf["acc"] *= rho
            buf["acc"] += (1 - rho) * g * g
            update = (np.sqrt(buf["delta_acc"] + EPS)
                      / np.sqrt(buf["acc"] + EPS)) * g
            buf["delta_acc"] *= rho
            buf["delta_acc"] += (1 - rho) * update * update
            p -= lr * update
