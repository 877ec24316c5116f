"""Lockstep training loop and the config-driven experiment runner."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from ..config import RunConfig
from ..data import (CsvSchema, Dataset, SyntheticSpec, batch_iterator, generate_synthetic, load_csv,
                    standardize)
from ..defenses import DefenseConfig, NoiseSource
from ..evaluation import MetricsRecord, run_evaluation, train_independent_reconstructor
from ..nn import Mlp, SgdOptimizer
from .messages import BackwardMsg, ProtocolError, SessionHello
from .parties import ActiveParty, PassiveParty, StepSummary
from .transport import ActiveWorker, InProcessTransport, SocketTransport


class SessionAbort(RuntimeError):
    pass


class Session:
    """Drives one passive party against an active party behind a transport."""

    def __init__(self, passive: PassiveParty, transport):
        self.passive = passive
        self.transport = transport
        self.open = False

    def start(self):
        self.transport.send(self.passive.hello())
        try:
            reply = self.transport.recv()
        except ProtocolError as exc:
            raise SessionAbort(f"handshake failed: {exc}") from exc
        if not isinstance(reply, SessionHello) or reply.d_emb != self.passive.d_emb:
            raise SessionAbort(f"parties disagree on the cut-layer width: {reply!r}")
        self.open = True
        return self

    def step(self, x_batch, noise_batch=None) -> StepSummary:
        self.transport.send(self.passive.forward(x_batch))
        reply = self.transport.recv()
        if not isinstance(reply, BackwardMsg):
            raise ProtocolError(f"expected a backward message, got {type(reply).__name__}")
        return self.passive.backward(reply, noise_batch)

    def close(self):
        if self.open:
            self.open = False
            self.transport.close()


# ---------------------------------------------------------------------------
# config-driven runs


def build_dataset(cfg: RunConfig) -> Dataset:
    d = cfg.data
    if d.source == "synthetic":
        s = d.synthetic
        spec = SyntheticSpec(
            n_samples=s.n_samples, n_passive=s.n_passive, n_active=s.n_active,
            informative_dims=s.informative_dims, latent_dims=s.latent_dims,
            latent_strength=s.latent_strength, coef=s.coef, coef_scale=s.coef_scale,
            intercept=s.intercept, noise_std=s.noise_std,
            seed=cfg.seed if s.seed is None else s.seed,
        )
        ds = generate_synthetic(spec, d.splits)
    else:
        c = d.csv
        ds = load_csv(c.path, CsvSchema(c.label, dict(c.ownership), tuple(d.splits), cfg.seed, c.split_column))
    if d.standardize:
        ds, _ = standardize(ds)
    return ds


@dataclass
class Models:
    F: Mlp
    H: Mlp
    R: Optional[Mlp]
    R_noise: Optional[Mlp]


def _seeds(cfg: RunConfig) -> dict:
    names = ["F", "H", "R", "R_noise", "noise", "perturb", "batches", "attack", "eval"]
    children = np.random.SeedSequence(cfg.seed).spawn(len(names))
    return dict(zip(names, children))


def build_models(cfg: RunConfig, n_passive: int, n_active: int = 0, seeds=None) -> Models:
    seeds = seeds or _seeds(cfg)
    m = cfg.model
    defense = cfg.defense.build()
    rng = np.random.default_rng
    F = Mlp.build([n_passive, *m.extractor_hidden, m.d_emb], rng(seeds["F"]), name="extractor")
    h_in = m.d_emb + (n_active if m.active_features else 0)
    H = Mlp.build([h_in, *m.predictor_hidden, 1], rng(seeds["H"]), name="predictor")
    R = R_noise = None
    rec_dims = [m.d_emb, *m.reconstructor_hidden, n_passive]
    if defense.needs_reconstructor:
        R = Mlp.build(rec_dims, rng(seeds["R"]), name="reconstructor")
        if not defense.share_reconstructor and defense.alpha_n > 0:
            R_noise = Mlp.build(rec_dims, rng(seeds["R_noise"]), name="noise_reconstructor")
    return Models(F, H, R, R_noise)


class Experiment:
    """Everything one run needs: data, both parties, transport, evaluator."""

    def __init__(self, cfg: RunConfig, dataset: Optional[Dataset] = None, narrow_inprocess: bool = False):
        self.cfg = cfg
        self.dataset = dataset if dataset is not None else build_dataset(cfg)
        self.seeds = _seeds(cfg)
        n_active = self.dataset.n_active if cfg.model.active_features else 0
        if cfg.model.active_features and not n_active:
            raise ValueError("model.active_features is set but the dataset has no active features")
        self.models = build_models(cfg, self.dataset.n_passive, n_active, self.seeds)
        self.defense: DefenseConfig = cfg.defense.build()
        opt = cfg.optimizer
        self.passive = PassiveParty(
            self.models.F, self.defense, R=self.models.R, R_noise=self.models.R_noise,
            optimizer=SgdOptimizer(opt.learning_rate, opt.momentum, opt.clip_norm),
            noise=NoiseSource(self.defense.noise_kind, self.defense.noise_params, self.seeds["noise"]),
            perturb_rng=np.random.default_rng(self.seeds["perturb"]),
        )
        self.active = ActiveParty(self.models.H, SgdOptimizer(opt.learning_rate, opt.momentum, opt.clip_norm), n_active)
        self.narrow_inprocess = narrow_inprocess

    def _streams(self):
        """Both parties walk the same shuffled row order from a shared seed."""
        bs = self.cfg.training.batch_size
        seed = self.seeds["batches"]
        passive_rows = (xp for xp, _, _ in batch_iterator(self.dataset, "train", bs, seed))
        use_xa = self.active.n_features > 0
        active_rows = ((y, xa if use_xa else None) for _, xa, y in batch_iterator(self.dataset, "train", bs, seed))
        return passive_rows, active_rows

    def _transport(self, worker: ActiveWorker):
        if self.cfg.training.transport == "socket":
            return SocketTransport.spawn(worker)
        return InProcessTransport(worker, narrow=self.narrow_inprocess)

    def eval_batches(self) -> List[tuple]:
        xp, xa, y = self.dataset.split("eval")
        bs = self.cfg.training.batch_size
        use_xa = self.active.n_features > 0
        out = []
        for b in range(xp.shape[0] // bs):
            s = slice(b * bs, (b + 1) * bs)
            out.append((xp[s], xa[s] if use_xa else None, y[s]))
        return out

    def evaluate(self, step: int) -> MetricsRecord:
        cfg = self.cfg
        att = cfg.attack
        F = self.models.F.copy()
        std = self.defense.baseline_noise_std
        eval_ss = self.seeds["eval"]
        attack_seed = np.random.SeedSequence(entropy=self.seeds["attack"].entropy,
                                             spawn_key=self.seeds["attack"].spawn_key + (step,))
        R_I = train_independent_reconstructor(
            F, self.dataset.split("attack")[0], att.epochs,
            hidden=att.hidden if att.hidden is not None else cfg.model.reconstructor_hidden,
            batch_size=att.batch_size or cfg.training.batch_size,
            learning_rate=att.learning_rate, momentum=att.momentum, clip_norm=att.clip_norm,
            seed=attack_seed, perturb_std=std,
        )
        rng = np.random.default_rng(np.random.SeedSequence(entropy=eval_ss.entropy,
                                                           spawn_key=eval_ss.spawn_key + (step,)))
        return run_evaluation(F, self.models.H, R_I, self.eval_batches(), perturb_std=std, rng=rng, step=step)

    def run(self) -> Iterator[MetricsRecord]:
        t = self.cfg.training
        if t.n_batches == 0:
            return
        passive_rows, active_rows = self._streams()
        session = Session(self.passive, self._transport(ActiveWorker(self.active, active_rows)))
        session.start()
        try:
            yield self.evaluate(0)
            acc = np.zeros(4)
            count = 0
            for step in range(1, t.n_batches + 1):
                s = session.step(next(passive_rows))
                acc += (s.l_c, s.l_r, s.l_n, s.l_d)
                count += 1
                if step % t.eval_every == 0 or step == t.n_batches:
                    rec = self.evaluate(step)
                    rec.l_c, rec.l_r, rec.l_n, rec.l_d = (float(v) for v in acc / count)
                    acc[:] = 0
                    count = 0
                    yield rec
        finally:
            session.close()


def run_training(cfg: RunConfig, dataset: Optional[Dataset] = None) -> Iterator[MetricsRecord]:
    """Stream of metrics for one configured run (empty when n_batches == 0)."""
    return Experiment(cfg, dataset).run()
