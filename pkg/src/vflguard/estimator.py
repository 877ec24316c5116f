"""scikit-learn style wrappers around the two-party training loop.

``SplitVFLClassifier`` hides the protocol behind ``fit`` / ``predict_proba``;
its ``transform`` returns the cut-layer embedding, i.e. exactly what the
passive party would reveal.  ``ReconstructionAttacker`` fits an inversion
model against any fitted extractor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, batch_iterator
from .defenses import DefenseConfig, NoiseSource
from .evaluation import eval_reconstruction_mse, train_independent_reconstructor
from .nn import Mlp, SgdOptimizer
from .protocol.parties import ActiveParty, PassiveParty
from .protocol.session import Session
from .protocol.transport import ActiveWorker, InProcessTransport


class SplitVFLClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Binary classifier trained as a passive extractor plus an active predictor.

    ``X`` is the passive party's block.  Extra label-side features go in
    ``X_active`` and are concatenated to the embedding before the predictor.
    """

    def __init__(self, d_emb=16, extractor_hidden=(128,), predictor_hidden=(32,),
                 reconstructor_hidden=(128,), alpha_r=0.0, alpha_n=0.0, alpha_d=0.0, lam=1.0,
                 noise_kind="gaussian", baseline_noise_std=0.0, use_log_dcor=True,
                 n_batches=2000, batch_size=64, learning_rate=0.05, momentum=0.9,
                 clip_norm=1.0, random_state=0):
        self.d_emb = d_emb
        self.extractor_hidden = extractor_hidden
        self.predictor_hidden = predictor_hidden
        self.reconstructor_hidden = reconstructor_hidden
        self.alpha_r = alpha_r
        self.alpha_n = alpha_n
        self.alpha_d = alpha_d
        self.lam = lam
        self.noise_kind = noise_kind
        self.baseline_noise_std = baseline_noise_std
        self.use_log_dcor = use_log_dcor
        self.n_batches = n_batches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _defense(self) -> DefenseConfig:
        return DefenseConfig(alpha_r=self.alpha_r, alpha_n=self.alpha_n, alpha_d=self.alpha_d,
                             lam=self.lam, noise_kind=self.noise_kind,
                             use_log_dcor=self.use_log_dcor,
                             baseline_noise_std=self.baseline_noise_std)

    def _optimizer(self) -> SgdOptimizer:
        return SgdOptimizer(self.learning_rate, self.momentum, self.clip_norm)

    def fit(self, X, y, X_active=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) != 2:
            raise ValueError(f"binary labels required, got {len(self.classes_)} classes")
        n_active = 0
        if X_active is not None:
            X_active = check_array(X_active, dtype=np.float64)
            if X_active.shape[0] != X.shape[0]:
                raise ValueError("X and X_active disagree on row count")
            n_active = X_active.shape[1]
        if self.batch_size > X.shape[0]:
            raise ValueError(f"batch_size {self.batch_size} exceeds {X.shape[0]} samples")
        self.n_features_in_ = X.shape[1]
        self.n_active_features_ = n_active

        f_ss, h_ss, r_ss, noise_ss, perturb_ss, batch_ss = np.random.SeedSequence(self.random_state).spawn(6)
        rng = np.random.default_rng
        defense = self._defense()
        F = Mlp.build([X.shape[1], *self.extractor_hidden, self.d_emb], rng(f_ss), name="extractor")
        H = Mlp.build([self.d_emb + n_active, *self.predictor_hidden, 1], rng(h_ss), name="predictor")
        R = None
        if defense.needs_reconstructor:
            R = Mlp.build([self.d_emb, *self.reconstructor_hidden, X.shape[1]], rng(r_ss), name="reconstructor")
        passive = PassiveParty(F, defense, R=R, optimizer=self._optimizer(),
                               noise=NoiseSource(defense.noise_kind, defense.noise_params, noise_ss),
                               perturb_rng=rng(perturb_ss))
        active = ActiveParty(H, self._optimizer(), n_active)

        data = Dataset(X, y_idx.astype(np.float64), (X.shape[0], 0, 0), X_active)
        # both sides walk the same shuffled row order
        x_rows = (xp for xp, _, _ in batch_iterator(data, "train", self.batch_size, batch_ss))
        y_rows = ((yb, xa) for _, xa, yb in batch_iterator(data, "train", self.batch_size, batch_ss))
        session = Session(passive, InProcessTransport(ActiveWorker(active, y_rows))).start()
        self.loss_curve_ = []
        try:
            for _ in range(self.n_batches):
                self.loss_curve_.append(session.step(next(x_rows)).l_c)
        finally:
            session.close()
        self.extractor_, self.predictor_, self.reconstructor_ = F, H, R
        return self

    def transform(self, X):
        """Cut-layer embedding F(X), without the training-time perturbation."""
        check_is_fitted(self, "extractor_")
        X = check_array(X, dtype=np.float64)
        return self.extractor_(X)

    def decision_function(self, X, X_active=None):
        emb = self.transform(X)
        if self.n_active_features_:
            if X_active is None:
                raise ValueError("this model was fitted with X_active")
            emb = np.concatenate([emb, check_array(X_active, dtype=np.float64)], axis=1)
        return self.predictor_(emb)[:, 0]

    def predict_proba(self, X, X_active=None):
        logits = self.decision_function(X, X_active)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * logits))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X, X_active=None):
        return self.classes_[(self.decision_function(X, X_active) > 0).astype(int)]


class ReconstructionAttacker(BaseEstimator):
    """Inversion model R_I fitted on (F(X), X) pairs with F frozen.

    ``extractor`` is an :class:`Mlp` or a fitted :class:`SplitVFLClassifier`.
    """

    def __init__(self, extractor=None, hidden=(128,), epochs=5, batch_size=64,
                 learning_rate=0.05, momentum=0.9, clip_norm=1.0, random_state=0):
        self.extractor = extractor
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _F(self) -> Mlp:
        ext = self.extractor
        if isinstance(ext, SplitVFLClassifier):
            check_is_fitted(ext, "extractor_")
            return ext.extractor_
        if isinstance(ext, Mlp):
            return ext
        raise TypeError("extractor must be an Mlp or a fitted SplitVFLClassifier")

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        F = self._F().copy()
        self.model_ = train_independent_reconstructor(
            F, X, self.epochs, hidden=tuple(self.hidden), batch_size=self.batch_size,
            learning_rate=self.learning_rate, momentum=self.momentum, clip_norm=self.clip_norm,
            seed=self.random_state)
        self.extractor_ = F
        return self

    def predict(self, X):
        """Reconstructed inputs for raw passive rows ``X``."""
        check_is_fitted(self, "model_")
        return self.model_(self.extractor_(check_array(X, dtype=np.float64)))

    def score(self, X, y=None):
        """Negative reconstruction MSE (higher is better, as sklearn expects)."""
        check_is_fitted(self, "model_")
        return -eval_reconstruction_mse(self.model_, self.extractor_, check_array(X, dtype=np.float64))
