"""Passive and active party state machines.

The passive party owns X and the extractor F (plus any defense
reconstructor); the active party owns labels and the predictor H.  The
only things crossing the boundary are :class:`ForwardMsg` and
:class:`BackwardMsg`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tape
from ..defenses import DefenseConfig, NoiseSource, noise_perturb_embedding, record_objective
from ..nn import Mlp, SgdOptimizer, bce_with_logits, sgd_step
from .messages import BackwardMsg, ForwardMsg, ProtocolError, SessionHello


@dataclass
class StepSummary:
    batch_id: int
    l_c: float
    l_r: float = 0.0
    l_n: float = 0.0
    l_d: float = 0.0


class PassiveParty:
    def __init__(self, F: Mlp, defense: Optional[DefenseConfig] = None, *, R: Optional[Mlp] = None,
                 R_noise: Optional[Mlp] = None, optimizer: Optional[SgdOptimizer] = None,
                 noise: Optional[NoiseSource] = None, perturb_rng=None):
        self.F = F
        self.defense = defense or DefenseConfig()
        if self.defense.needs_reconstructor and R is None:
            raise ValueError("defense config needs a reconstructor R")
        for model in (R, R_noise):
            if model is not None and (model.in_dim != F.out_dim or model.out_dim != F.in_dim):
                raise ValueError(f"reconstructor {model.dims} incompatible with extractor {F.dims}")
        self.R = R
        self.R_noise = R_noise
        self.optimizer = optimizer or SgdOptimizer(0.05)
        self.noise = noise or NoiseSource(self.defense.noise_kind, self.defense.noise_params, seed=0)
        self.perturb_rng = perturb_rng if perturb_rng is not None else np.random.default_rng(0)
        self.next_batch_id = 0
        self._pending = None

    @property
    def d_emb(self) -> int:
        return self.F.out_dim

    def hello(self) -> SessionHello:
        return SessionHello(self.d_emb)

    def trainable(self) -> dict:
        params = dict(self.F.params())
        if self.R is not None:
            params.update(self.R.params())
        return params

    def forward(self, x_batch) -> ForwardMsg:
        if self._pending is not None:
            raise ProtocolError(f"batch {self._pending[0]} still awaiting its backward message")
        x = np.asarray(x_batch, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("input batch contains non-finite values")
        tape = Tape()
        fx = self.F.on_tape(tape, tape.constant(x))
        emb = noise_perturb_embedding(fx.value, self.defense.baseline_noise_std, self.perturb_rng)
        batch_id = self.next_batch_id
        self.next_batch_id += 1
        self._pending = (batch_id, tape, fx, x)
        return ForwardMsg(batch_id, emb)

    def backward(self, msg: BackwardMsg, noise_batch=None) -> StepSummary:
        if self._pending is None:
            raise ProtocolError("backward message without a pending forward")
        batch_id, tape, fx, x = self._pending
        if msg.batch_id != batch_id:
            raise ProtocolError(f"backward for batch {msg.batch_id}, expected {batch_id}")
        cfg = self.defense
        if cfg.alpha_n > 0 and noise_batch is None:
            noise_batch = self.noise.sample(x.shape)
        # the perturbation is an additive constant, so the received gradient
        # applies to F(X) unchanged
        obj = record_objective(cfg, tape, fx, x, msg.grad, self.R, noise_batch, self.R_noise)
        grads = tape.backward(root=obj.root)
        params = self.trainable()
        for name, p in params.items():
            grads.setdefault(name, np.zeros_like(p))
        sgd_step(params, grads, self.optimizer)
        self._pending = None
        return StepSummary(batch_id, msg.loss_value, obj.l_r, obj.l_n, obj.l_d)


class ActiveParty:
    def __init__(self, H: Mlp, optimizer: Optional[SgdOptimizer] = None, n_features: int = 0):
        if H.out_dim != 1:
            raise ValueError("predictor must output a single logit")
        self.H = H
        self.optimizer = optimizer or SgdOptimizer(0.05)
        self.n_features = n_features
        self.last_batch_id: Optional[int] = None

    @property
    def d_emb(self) -> int:
        return self.H.in_dim - self.n_features

    def accept_hello(self, hello: SessionHello) -> SessionHello:
        if hello.d_emb != self.d_emb:
            raise ProtocolError(f"cut-layer width mismatch: passive sends {hello.d_emb}, "
                                f"predictor expects {self.d_emb}")
        return SessionHello(self.d_emb, hello.version)

    def _inputs(self, tape: Tape, emb, x_active):
        node = tape.variable("embedding", emb, requires_grad=True)
        if self.n_features:
            if x_active is None or np.shape(x_active) != (emb.shape[0], self.n_features):
                raise ValueError(f"active features of shape (n, {self.n_features}) required")
            node = ad.concat([node, tape.constant(x_active)], axis=1)
        return node

    def step(self, msg: ForwardMsg, y_batch, x_active=None) -> BackwardMsg:
        if self.last_batch_id is not None and msg.batch_id <= self.last_batch_id:
            raise ProtocolError(f"batch id regressed: got {msg.batch_id} after {self.last_batch_id}")
        emb = np.asarray(msg.embedding, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[1] != self.d_emb:
            raise ProtocolError(f"embedding shape {emb.shape} does not match width {self.d_emb}")
        y = np.asarray(y_batch, dtype=np.float64)
        if y.shape != (emb.shape[0],):
            raise ProtocolError(f"{y.shape[0] if y.ndim else 0} labels for {emb.shape[0]} embedding rows")
        tape = Tape()
        logits = self.H.on_tape(tape, self._inputs(tape, emb, x_active))
        loss = bce_with_logits(ad.slice_(logits, (slice(None), 0)), y)
        grads = tape.backward(root=loss)
        cut_grad = grads.pop("embedding")
        # gradient comes from the pre-update predictor
        sgd_step(self.H.params(), grads, self.optimizer)
        self.last_batch_id = msg.batch_id
        return BackwardMsg(msg.batch_id, cut_grad, float(loss.value))

    def predict_logits(self, emb, x_active=None) -> np.ndarray:
        h_in = emb if not self.n_features else np.concatenate([emb, x_active], axis=1)
        return self.H(h_in)[:, 0]


# functional aliases
def passive_forward(s: PassiveParty, x_batch) -> ForwardMsg:
    return s.forward(x_batch)


def active_step(s: ActiveParty, msg: ForwardMsg, y_batch, x_active=None) -> BackwardMsg:
    return s.step(msg, y_batch, x_active)


def passive_backward(s: PassiveParty, msg: BackwardMsg, noise_batch=None) -> StepSummary:
    return s.backward(msg, noise_batch)
