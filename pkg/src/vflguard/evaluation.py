"""Attack simulation and the privacy/utility metrics.

The attacker is the strongest one we can simulate: a fresh reconstructor
trained with ground-truth inputs against a frozen copy of the extractor.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .autodiff import Tape
from .dcor import dcor
from .nn import Mlp, SgdOptimizer, mse_loss, sgd_step


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative label."""


@dataclass
class MetricsRecord:
    step: int
    l_c: float = 0.0
    l_r: float = 0.0
    l_n: float = 0.0
    l_d: float = 0.0
    attacker_mse: float = 0.0
    dcor_x_fx: float = 0.0
    auc: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc out of range: {self.auc}")
        if self.attacker_mse < 0:
            raise ValueError("attacker_mse must be >= 0")
        if not -1e-9 <= self.dcor_x_fx <= 1.0 + 1e-9:
            raise ValueError(f"dcor_x_fx out of range: {self.dcor_x_fx}")

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = [f.name for f in fields(MetricsRecord)]


def eval_auc(scores, labels) -> float:
    """Mann-Whitney AUC; ties between a positive and a negative count one half."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined for single-class labels")
    # average ranks over ties (1-based)
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _embed(F: Mlp, x, perturb_std: float = 0.0, rng=None) -> np.ndarray:
    fx = F(x)
    if perturb_std:
        fx = fx + rng.normal(0.0, perturb_std, size=fx.shape)
    return fx


def train_independent_reconstructor(
    F: Mlp,
    x,
    epochs: int = 5,
    *,
    hidden: Sequence[int] = (128,),
    batch_size: int = 64,
    learning_rate: float = 0.05,
    momentum: float = 0.9,
    clip_norm: Optional[float] = 1.0,
    seed=0,
    perturb_std: float = 0.0,
) -> Mlp:
    """Fit R_I to minimise mse(R_I(F(x)), x) with F held fixed.

    ``F`` is only ever evaluated, never bound to a tape, so it cannot move.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != F.in_dim:
        raise ValueError(f"attack data has shape {x.shape}, extractor expects {F.in_dim} columns")
    rng = np.random.default_rng(seed)
    R = Mlp.build([F.out_dim, *hidden, x.shape[1]], rng, name="attacker")
    opt = SgdOptimizer(learning_rate, momentum, clip_norm)
    n = x.shape[0]
    bs = min(batch_size, n)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for b in range(n // bs):
            xb = x[perm[b * bs:(b + 1) * bs]]
            emb = _embed(F, xb, perturb_std, rng)
            tape = Tape()
            loss = mse_loss(R.on_tape(tape, tape.constant(emb)), xb)
            sgd_step(R.params(), tape.backward(root=loss), opt)
    return R


def eval_reconstruction_mse(R_I: Mlp, F: Mlp, x_eval, perturb_std: float = 0.0, rng=None) -> float:
    x_eval = np.asarray(x_eval, dtype=np.float64)
    recon = R_I(_embed(F, x_eval, perturb_std, rng))
    return float(np.mean((recon - x_eval) ** 2))


def run_evaluation(F: Mlp, H: Mlp, R_I: Mlp, eval_batches: Iterable[tuple], *,
                   perturb_std: float = 0.0, rng=None, step: int = 0) -> MetricsRecord:
    """Average attacker MSE, dCor(X, F(X)) and AUC over ``eval_batches``.

    Each batch is ``(x_passive, x_active_or_None, labels)``.  When a baseline
    perturbation is configured every metric sees the perturbed embedding, as
    that is what leaves the passive party.
    """
    mses, dcors, aucs = [], [], []
    for xp, xa, y in eval_batches:
        fx = _embed(F, xp, perturb_std, rng)
        mses.append(float(np.mean((R_I(fx) - xp) ** 2)))
        dcors.append(dcor(xp, fx).dcor)
        h_in = fx if xa is None else np.concatenate([fx, xa], axis=1)
        aucs.append(eval_auc(H(h_in)[:, 0], y))
    if not mses:
        raise ValueError("run_evaluation needs at least one eval batch")
    return MetricsRecord(step=step, attacker_mse=float(np.mean(mses)),
                         dcor_x_fx=float(np.mean(dcors)), auc=float(np.mean(aucs)))


# ---------------------------------------------------------------------------
# serialisation


def records_to_jsonl(records: Iterable[MetricsRecord]) -> str:
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)


def records_to_csv(records: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in records:
        d = r.to_dict()
        w.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in METRIC_FIELDS])
    return buf.getvalue()


def read_jsonl(text: str) -> List[MetricsRecord]:
    return [MetricsRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]
