"""Passive-side defense losses and the embedding-noise baseline.

The passive party's objective is

    L_c + alpha_r * L_r + alpha_n * L_n + alpha_d * L_d

where L_c only arrives as the cut-layer gradient sent back by the active
party.  ``L_r`` trains a reconstructor behind a gradient reversal layer,
``L_n`` pulls that reconstructor's output toward fresh noise while leaving
its parameters untouched, and ``L_d`` is log distance correlation between
the raw batch and its embedding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import GradientMap, Node, ShapeError, Tape
from .dcor import dcor_loss, log_dcor_loss
from .grl import GradientReversal
from .nn import Mlp, mse_loss

NOISE_KINDS = ("gaussian", "uniform")


@dataclass
class DefenseConfig:
    alpha_r: float = 0.0
    alpha_n: float = 0.0
    alpha_d: float = 0.0
    lam: float = 1.0
    noise_kind: str = "gaussian"
    noise_params: Dict[str, float] = field(default_factory=dict)
    use_log_dcor: bool = True
    baseline_noise_std: float = 0.0
    share_reconstructor: bool = True

    def __post_init__(self):
        for key in ("alpha_r", "alpha_n", "alpha_d", "baseline_noise_std"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}")

    @property
    def needs_reconstructor(self) -> bool:
        return self.alpha_r > 0 or self.alpha_n > 0

    @property
    def is_vanilla(self) -> bool:
        return not (self.alpha_r or self.alpha_n or self.alpha_d or self.baseline_noise_std)

    def to_dict(self) -> dict:
        return asdict(self)


class NoiseSource:
    """Seeded generator for NR targets; one fresh draw per call."""

    def __init__(self, kind: str = "gaussian", params: Optional[dict] = None, seed=None):
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {kind!r}")
        self.kind = kind
        self.params = dict(params or {})
        self.rng = np.random.default_rng(seed)

    def sample(self, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return self.rng.normal(self.params.get("mean", 0.0), self.params.get("std", 1.0), size=shape)
        return self.rng.uniform(self.params.get("low", -1.0), self.params.get("high", 1.0), size=shape)


def ar_loss(R: Mlp, fx: Node, x, lam: float = 1.0) -> Node:
    """Reconstruction loss behind a GRL: descent for R, ascent for F."""
    tape = fx.tape
    x = tape.lift(x)
    if R.in_dim != fx.shape[1] or R.out_dim != x.shape[1]:
        raise ShapeError(f"reconstructor {R.dims} does not map {fx.shape[1]} -> {x.shape[1]}")
    return mse_loss(R.on_tape(tape, GradientReversal(lam)(fx)), x)


def nr_loss(R: Mlp, fx: Node, noise) -> Node:
    """MSE between R(F(X)) and noise; R's parameters receive nothing from it."""
    tape = fx.tape
    noise = tape.lift(noise)
    if R.in_dim != fx.shape[1] or R.out_dim != noise.shape[1]:
        raise ShapeError(f"reconstructor {R.dims} does not map {fx.shape[1]} -> {noise.shape[1]}")
    with tape.blocking():
        return mse_loss(R.on_tape(tape, fx), noise)


def shared_reconstructor_step(cfg: DefenseConfig, R: Mlp, fx: Node, x, noise, R_noise: Optional[Mlp] = None):
    """Record alpha_r * L_r + alpha_n * L_n for one reconstructor (or two when
    ``R_noise`` is given).  Returns ``(weighted_node_or_None, L_r, L_n)``."""
    if not cfg.needs_reconstructor:
        raise ValueError("reconstructor step requested with alpha_r = alpha_n = 0")
    terms = []
    l_r = l_n = 0.0
    if cfg.alpha_r > 0:
        node = ar_loss(R, fx, x, cfg.lam)
        l_r = float(node.value)
        terms.append(cfg.alpha_r * node)
    if cfg.alpha_n > 0:
        node = nr_loss(R_noise if R_noise is not None else R, fx, noise)
        l_n = float(node.value)
        terms.append(cfg.alpha_n * node)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total, l_r, l_n


@dataclass
class PassiveObjective:
    """Result of recording the passive objective on a tape."""

    root: Node
    l_r: float = 0.0
    l_n: float = 0.0
    l_d: float = 0.0
    dcor: float = float("nan")


def record_objective(cfg: DefenseConfig, tape: Tape, fx: Node, x, cut_grad, R: Optional[Mlp] = None,
                     noise=None, R_noise: Optional[Mlp] = None) -> PassiveObjective:
    """Record sum(F(X) * g) plus the weighted defense losses on ``tape``.

    The first term is the pullback of L_c: its gradient w.r.t. F(X) is exactly
    the cut-layer gradient ``g`` received from the active party.
    """
    x = tape.lift(x)
    g = np.asarray(cut_grad, dtype=np.float64)
    if g.shape != fx.shape:
        raise ShapeError(f"cut-layer gradient shape {g.shape} != embedding shape {fx.shape}")
    root = ad.sum_(fx * tape.constant(g))
    out = PassiveObjective(root)
    if cfg.needs_reconstructor:
        if R is None:
            raise ValueError("reconstructor required by the defense config")
        if cfg.alpha_n > 0 and noise is None:
            raise ValueError("noise batch required when alpha_n > 0")
        rec, out.l_r, out.l_n = shared_reconstructor_step(cfg, R, fx, x, noise, R_noise)
        root = root + rec
    if cfg.alpha_d > 0:
        fn = log_dcor_loss if cfg.use_log_dcor else dcor_loss
        node, res = fn(x, fx)
        out.l_d = float(node.value)
        out.dcor = res.dcor
        root = root + cfg.alpha_d * node
    out.root = root
    return out


def combined_loss(cfg: DefenseConfig, cut_grad, R: Optional[Mlp], F: Mlp, x, noise=None,
                  R_noise: Optional[Mlp] = None) -> GradientMap:
    """Total passive-side GradientMap for one batch (F and R parameters)."""
    tape = Tape()
    fx = F.on_tape(tape, tape.constant(x))
    obj = record_objective(cfg, tape, fx, x, cut_grad, R, noise, R_noise)
    grads = tape.backward(root=obj.root)
    # make sure every reconstructor parameter is present even if untouched
    for model in (R, R_noise):
        if model is not None:
            for name, p in model.params().items():
                grads.setdefault(name, np.zeros_like(p))
    return grads


def noise_perturb_embedding(fx, std: float, rng: np.random.Generator) -> np.ndarray:
    if std < 0:
        raise ValueError("noise std must be >= 0")
    fx = np.asarray(fx, dtype=np.float64)
    if std == 0:
        return fx
    return fx + rng.normal(0.0, std, size=fx.shape)
