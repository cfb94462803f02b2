"""Adam and plain SGD over a flat parameter vector, with an optional update mask."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, mask: np.ndarray | None = None) -> None:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        update = self.lr * mhat / (np.sqrt(vhat) + self.eps)
        if mask is None:
            theta -= update
        else:
            theta[mask] -= update[mask]


class Sgd:
    def __init__(self, lr: float = 1e-2):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray, mask: np.ndarray | None = None) -> None:
        if mask is None:
            theta -= self.lr * grad
        else:
            theta[mask] -= self.lr * grad[mask]


def make_optimizer(name: str, lr: float):
    name = name.lower()
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return Sgd(lr)
    raise ValueError(f"unknown optimizer {name!r}")
