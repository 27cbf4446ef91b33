"""AdaDelta optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class OptimizerState:
    rho: float = 0.95
    epsilon: float = 1e-6
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)  # E[g^2]
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)  # E[dx^2]

    @classmethod
    def fresh(cls, params: dict[str, np.ndarray], rho=0.95, epsilon=1e-6) -> "OptimizerState":
        return cls(
            rho,
            epsilon,
            {k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()},
        )


def adadelta_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                  state: OptimizerState) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One AdaDelta update; returns new parameter and state dicts (inputs untouched)."""
    if params.keys() != grads.keys() or params.keys() != state.sq_grad.keys():
        raise ShapeMismatch("params, grads and optimizer state must cover the same names")
    rho, eps = state.rho, state.epsilon
    new_params, new_g2, new_d2 = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.sq_grad[name].shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        g2 = rho * state.sq_grad[name] + (1 - rho) * g * g
        delta = -(np.sqrt(state.sq_delta[name] + eps) / np.sqrt(g2 + eps)) * g
        new_d2[name] = rho * state.sq_delta[name] + (1 - rho) * delta * delta
        new_g2[name] = g2
        new_params[name] = p + delta
    return new_params, OptimizerState(rho, eps, new_g2, new_d2)
