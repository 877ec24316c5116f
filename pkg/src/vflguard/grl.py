"""Gradient reversal: identity forward, ``-lambda * upstream`` backward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Node


@dataclass(frozen=True)
class GradientReversal:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("GRL strength lambda must be positive")

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        return -self.lam * np.asarray(upstream, dtype=np.float64)

    def __call__(self, x: Node) -> Node:
        return x.tape.record("grl", self.forward(x.value), (x,), lambda g: (self.backward(g),))


def grl_forward(g: GradientReversal, x):
    return g.forward(x)


def grl_backward(g: GradientReversal, upstream):
    return g.backward(upstream)


def grl(x: Node, lam: float = 1.0) -> Node:
    return GradientReversal(lam)(x)
