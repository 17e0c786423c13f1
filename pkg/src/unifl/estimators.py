"""scikit-learn style estimators over lists of UniFL instances.

``X`` is a single :class:`UniflInstance` or a sequence of them; there is no
target. ``fit`` tunes or trains, ``predict_proba`` returns per-vertex opening
probabilities, ``predict`` returns sampled :class:`Solution` objects and
``score`` is the negated mean expected (or sampled) total, so larger is better.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import mpnn
from .expectation import expected_cost
from .radius import compute_radii
from .sampling import (DEFAULT_MAX_ROUNDS, grid_search_c, log_grid, probs_simple,
                       run_recursion, sample_simple)
from .validation import check_instances, check_positive, check_random_state


def _unwrap(values, X):
    from .instance import UniflInstance

    return values[0] if isinstance(X, UniflInstance) else values


class SimpleUniformFL(BaseEstimator):
    """Independent opening with ``p = min(1, c ln(n) r_x)`` plus forced openings.

    With ``c=None`` the constant is tuned on the training instances over a
    log-spaced grid; otherwise ``fit`` only validates ``c``.
    """

    def __init__(self, c=None, grid_lo=1e-3, grid_hi=10.0, grid_n=100, samples=None,
                 random_state=0):
        self.c = c
        self.grid_lo = grid_lo
        self.grid_hi = grid_hi
        self.grid_n = grid_n
        self.samples = samples
        self.random_state = random_state

    def fit(self, X, y=None):
        instances = check_instances(X)
        seed = check_random_state(self.random_state)
        if self.c is None:
            grid = log_grid(self.grid_lo, self.grid_hi, self.grid_n)
            self.c_, self.tuning_curve_ = grid_search_c(instances, "simple", grid, self.samples,
                                                        seed, return_curve=True)
        else:
            self.c_ = check_positive(self.c)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "c_")
        out = [probs_simple(inst, compute_radii(inst), self.c_).p for inst in check_instances(X)]
        return _unwrap(out, X)

    def predict(self, X, seed=None):
        check_is_fitted(self, "c_")
        seed = check_random_state(self.random_state if seed is None else seed)
        out = []
        for i, inst in enumerate(check_instances(X)):
            probs = probs_simple(inst, compute_radii(inst), self.c_)
            out.append(sample_simple(inst, probs, seed, sample_index=i))
        return _unwrap(out, X)

    def score(self, X, y=None, metric="linear"):
        check_is_fitted(self, "c_")
        instances = check_instances(X)
        costs = [expected_cost(inst, p, metric).total
                 for inst, p in zip(instances, self.predict_proba(instances))]
        return -float(np.mean(costs))


class RecursiveUniformFL(BaseEstimator):
    """Round-based opening with ``p = min(1, c d(x, F), c r_x)`` and 6 r_x assignment."""

    def __init__(self, c=6.0, max_rounds=DEFAULT_MAX_ROUNDS, recompute_radii=False,
                 tune=False, grid_lo=1e-3, grid_hi=10.0, grid_n=100, samples=20,
                 random_state=0):
        self.c = c
        self.max_rounds = max_rounds
        self.recompute_radii = recompute_radii
        self.tune = tune
        self.grid_lo = grid_lo
        self.grid_hi = grid_hi
        self.grid_n = grid_n
        self.samples = samples
        self.random_state = random_state

    def fit(self, X, y=None):
        instances = check_instances(X)
        seed = check_random_state(self.random_state)
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.tune:
            grid = log_grid(self.grid_lo, self.grid_hi, self.grid_n)
            self.c_ = grid_search_c(instances, "recursive", grid, self.samples, seed,
                                    self.max_rounds)
        else:
            self.c_ = check_positive(self.c)
        return self

    def predict(self, X, seed=None):
        check_is_fitted(self, "c_")
        seed = check_random_state(self.random_state if seed is None else seed)
        out = [run_recursion(inst, compute_radii(inst), self.c_, self.max_rounds, seed,
                             sample_index=i, recompute_radii=self.recompute_radii)
               for i, inst in enumerate(check_instances(X))]
        return _unwrap(out, X)

    def score(self, X, y=None):
        check_is_fitted(self, "c_")
        seed = check_random_state(self.random_state)
        totals = []
        for inst in check_instances(X):
            radii = compute_radii(inst)
            totals.append(np.mean([run_recursion(inst, radii, self.c_, self.max_rounds, seed, s,
                                                 self.recompute_radii).total
                                   for s in range(self.samples or 1)]))
        return -float(np.mean(totals))


class MPNNFacilityLocation(BaseEstimator):
    """Message-passing network trained on the closed-form expected cost.

    Initialization is algorithmic: with ``c=None`` the constant of the simple
    rule is first tuned on the training set, and the network starts out
    reproducing that tuned rule at the training size.
    """

    def __init__(self, k=32, hidden=32, c=None, layers=1, aggregation="sum", lr=1e-3,
                 steps=1000, batch_size=8, patience=100, optimizer="adaptive-moment",
                 metric="linear", random_state=0):
        self.k = k
        self.hidden = hidden
        self.c = c
        self.layers = layers
        self.aggregation = aggregation
        self.lr = lr
        self.steps = steps
        self.batch_size = batch_size
        self.patience = patience
        self.optimizer = optimizer
        self.metric = metric
        self.random_state = random_state

    def _init_params(self, instances):
        seed = check_random_state(self.random_state)
        if self.c is None:
            c = grid_search_c(instances, "simple", seed=seed)
        else:
            c = check_positive(self.c)
        n_hint = int(round(np.median([inst.n for inst in instances])))
        return c, mpnn.algorithmic_init(mpnn.uniform_discretization(self.k), c, max(n_hint, 2),
                                        hidden=self.hidden, aggregation=self.aggregation,
                                        layers=self.layers, seed=seed)

    def fit(self, X, y=None, X_val=None, log=None):
        instances = check_instances(X)
        val = check_instances(X_val) if X_val is not None else None
        self.c_, init = self._init_params(instances)
        cfg = mpnn.TrainConfig(lr=self.lr, steps=self.steps, batch_size=self.batch_size,
                               seed=check_random_state(self.random_state),
                               optimizer=self.optimizer, early_stop_patience=self.patience,
                               metric=self.metric)
        result = mpnn.train(init, instances, val, cfg, log=log)
        self.params_ = result.params
        self.train_loss_ = result.train_loss
        self.val_loss_ = result.val_loss
        self.best_epoch_ = result.best_epoch
        return self

    @classmethod
    def from_params(cls, params, **kwargs):
        """Wrap an existing parameter set as a fitted estimator."""
        est = cls(k=params.disc.k, hidden=params.hidden, layers=params.layers,
                  aggregation=params.aggregation, **kwargs)
        est.params_ = params
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        out = [mpnn.forward(self.params_, inst)[0].p for inst in check_instances(X)]
        return _unwrap(out, X)

    def predict(self, X, seed=None):
        check_is_fitted(self, "params_")
        seed = check_random_state(self.random_state if seed is None else seed)
        out = []
        for i, inst in enumerate(check_instances(X)):
            probs, _ = mpnn.forward(self.params_, inst)
            out.append(sample_simple(inst, probs, seed, sample_index=i))
        return _unwrap(out, X)

    def score(self, X, y=None):
        check_is_fitted(self, "params_")
        return -mpnn.mean_expected_cost(self.params_, check_instances(X), self.metric)[0]
