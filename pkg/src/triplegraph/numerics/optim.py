"""Adam with bias correction."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param):
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), 0)


def adam_step(params, states, lr, beta1=0.5, beta2=0.9, eps=1e-8):
    """One Adam update of every parameter in place, then zero the gradients."""
    for p, s in zip(params, states):
        g = p.grad
        s.step += 1
        s.m *= beta1
        s.m += (1.0 - beta1) * g
        s.v *= beta2
        s.v += (1.0 - beta2) * (g * g)
        m_hat = s.m / (1.0 - beta1**s.step)
        v_hat = s.v / (1.0 - beta2**s.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


@dataclass
class Adam:
    """Adam over a fixed, ordered list of parameters."""

    params: list
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    states: list = field(default=None)

    def __post_init__(self):
        if self.states is None:
            self.states = [AdamState.zeros_like(p) for p in self.params]

    def step(self):
        adam_step(self.params, self.states, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
