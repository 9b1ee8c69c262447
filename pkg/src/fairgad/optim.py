"""Adam optimizer over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    first_moment: list
    second_moment: list
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8

    @classmethod
    def init(cls, params, learning_rate: float, beta1: float = 0.9,
             beta2: float = 0.999, epsilon_stab: float = 1e-8) -> "AdamState":
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
            step_count=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon_stab=epsilon_stab,
        )


def adam_step(params, grads, state: AdamState) -> AdamState:
    """One bias-corrected Adam update; parameters are modified in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("parameter, gradient and state lengths disagree")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon_stab)
    state.step_count = t
    return state


class Adam:
    """Convenience wrapper that reads gradients off the parameters."""

    def __init__(self, params, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon_stab: float = 1e-8):
        self.params: list[Tensor] = list(params)
        self.state = AdamState.init(self.params, learning_rate, beta1, beta2, epsilon_stab)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
