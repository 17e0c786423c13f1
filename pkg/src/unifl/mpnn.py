"""Discretized message-passing network producing opening probabilities.

One aggregation round computes, for every bin edge ``a_i`` of a
discretization of ``[0, 1]``,

    s_x(i) = sum_{y in N(x)} msg(a_i, d(x, y))      (optionally divided by n)
    t_x(i) = clip(s_x(i))

then a per-bin combine network turns the profile ``t_x(0..k)`` into a radius
estimate ``r_hat_x = sum_i combine(a_i, t_x(i-1), t_x(i))`` and a head maps
``(ln n, r_hat_x)`` to a probability, hard-clipped to ``[0, 1]``. Every map is
a one-hidden-layer ReLU network. Optional refinement rounds update
``r_hat`` from neighbor estimates before the head.

:func:`algorithmic_init` sets weights so the network reproduces
``min(1, c ln(n) r_x)`` up to ``c ln(n) / k``; training then minimizes the
closed-form expected cost.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .errors import DivergedLoss, NonFiniteActivation, TapeMismatch
from .expectation import expected_cost, expected_cost_grad
from .instance import UniflInstance, disjoint_union
from .sampling import OpeningProbabilities

PARAMS_FORMAT = "unifl-mpnn"
PARAMS_VERSION = 1
AGGREGATIONS = ("sum", "normalized-sum")
OPTIMIZERS = ("plain-gradient", "momentum", "adaptive-moment")

# input width of each sub-network
_NETS = {"msg": 2, "clip": 1, "combine": 3, "head": 2}
_REFINE_NETS = {"rmsg": 2, "rupd": 2}


@dataclass(frozen=True)
class Discretization:
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 1 or a.size < 2 or a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) <= 0):
            raise ValueError("discretization must increase strictly from 0 to 1")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def k(self):
        return self.a.size - 1

    @property
    def delta(self):
        return float(np.max(np.diff(self.a)))

    @property
    def is_uniform(self):
        return bool(np.allclose(np.diff(self.a), 1.0 / self.k, rtol=0, atol=1e-15))


def uniform_discretization(k=32):
    if k < 1:
        raise ValueError("k must be >= 1")
    return Discretization(np.arange(k + 1) / k)


@dataclass
class MpnnParams:
    disc: Discretization
    hidden: int
    tensors: dict
    aggregation: str = "sum"
    layers: int = 1
    grads: dict = field(default_factory=dict)
    version: int = 0

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        for name, arr in self.tensors.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite parameter tensor {name}")
        if not self.grads:
            self.zero_grad()

    def zero_grad(self):
        self.grads = {name: np.zeros_like(t) for name, t in self.tensors.items()}

    def copy(self):
        return copy.deepcopy(self)

    def flat(self):
        return np.concatenate([self.tensors[k].ravel() for k in sorted(self.tensors)])

    def digest(self):
        import hashlib
        return hashlib.sha256(self.flat().tobytes()).hexdigest()[:16]

    # --- serialization -------------------------------------------------------

    def to_json(self):
        return {
            "format": PARAMS_FORMAT,
            "version": PARAMS_VERSION,
            "bins": self.disc.a.tolist(),
            "hidden": self.hidden,
            "aggregation": self.aggregation,
            "layers": self.layers,
            "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                        for k, v in sorted(self.tensors.items())},
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != PARAMS_FORMAT or obj.get("version") != PARAMS_VERSION:
            raise ValueError("not a unifl-mpnn v1 parameter file")
        tensors = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                   for k, v in obj["tensors"].items()}
        return cls(Discretization(obj["bins"]), int(obj["hidden"]), tensors,
                   aggregation=obj["aggregation"], layers=int(obj["layers"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _net_names(layers):
    names = dict(_NETS)
    for layer in range(1, layers):
        for base, width in _REFINE_NETS.items():
            names[f"{base}{layer}"] = width
    return names


def random_params(disc, hidden=32, aggregation="sum", layers=1, seed=0, scale=0.3):
    """Generic random initialization (no algorithmic structure)."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for net, width in _net_names(layers).items():
        tensors[f"{net}.W1"] = rng.normal(0.0, scale, (width, hidden))
        tensors[f"{net}.b1"] = rng.normal(0.0, scale, hidden)
        tensors[f"{net}.W2"] = rng.normal(0.0, scale, (hidden, 1))
        tensors[f"{net}.b2"] = np.zeros(1)
    return MpnnParams(disc, hidden, tensors, aggregation=aggregation, layers=layers)


def algorithmic_init(disc, c, n_hint, hidden=32, aggregation="sum", layers=1, seed=0,
                     spare_scale=0.1):
    """Weights that reproduce ``min(1, c ln(n_hint) r_x)`` to within ``c ln(n_hint) delta``.

    Hidden unit 0 (and 1 in the combine net) carries the construction; the
    remaining units get small random input weights and zero output weights,
    so they do not change the output but receive gradient during training.

    The combine net counts the bins lying below the radius: bin ``i``
    contributes its width unless ``t(i-1)`` is within ``1/k`` of saturation.
    Because every row holds the self-loop, ``1 - phi(a) >= r - a`` for
    ``a < r``, so at most the one bin containing ``r`` is partially counted
    and the estimate stays inside that bin.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if hidden < 2:
        raise ValueError("algorithmic initialization needs hidden >= 2")
    if not disc.is_uniform:
        raise ValueError("algorithmic initialization requires a uniform discretization")
    rng = np.random.default_rng(seed)
    tensors = {}
    for net, width in _net_names(layers).items():
        tensors[f"{net}.W1"] = rng.normal(0.0, spare_scale, (width, hidden))
        tensors[f"{net}.b1"] = rng.uniform(0.0, spare_scale, hidden)
        tensors[f"{net}.W2"] = np.zeros((hidden, 1))
        tensors[f"{net}.b2"] = np.zeros(1)

    def unit(net, j, w_in, b_in, w_out):
        tensors[f"{net}.W1"][:, j] = w_in
        tensors[f"{net}.b1"][j] = b_in
        tensors[f"{net}.W2"][j, 0] = w_out

    # msg(a, d) = relu(a - d)
    unit("msg", 0, (1.0, -1.0), 0.0, 1.0)
    # clip(s) = 1 - relu(1 - m s), m = n_hint undoes the order normalization
    m = float(n_hint) if aggregation == "normalized-sum" else 1.0
    unit("clip", 0, (-m,), 1.0, -1.0)
    tensors["clip.b2"][0] = 1.0
    # combine(a, t_prev, t) = w (1 - relu(K t_prev - K + 1) + relu(K t_prev - K))
    k = disc.k
    width = 1.0 / k
    unit("combine", 0, (0.0, float(k), 0.0), 1.0 - k, -width)
    unit("combine", 1, (0.0, float(k), 0.0), -float(k), width)
    tensors["combine.b2"][0] = width
    # head(ln n, r) = 1 - relu(1 - c ln(n_hint) r)
    unit("head", 0, (0.0, -c * math.log(n_hint)), 1.0, -1.0)
    tensors["head.b2"][0] = 1.0
    return MpnnParams(disc, hidden, tensors, aggregation=aggregation, layers=layers)


# --- forward / backward ----------------------------------------------------------


@dataclass
class ForwardTape:
    tape: Tape
    p: object
    leaves: dict
    params_id: int
    params_version: int
    features: dict


class _Graph:
    """Flat view of one instance or a disjoint union of several."""

    def __init__(self, instances):
        if isinstance(instances, UniflInstance):
            instances = [instances]
        self.instances = list(instances)
        self.union = instances[0] if len(instances) == 1 else disjoint_union(instances)
        self.sizes = np.array([inst.n for inst in instances])
        self.vertex_n = np.repeat(self.sizes, self.sizes).astype(np.float64)


def _mlp(tape, leaves, net, x):
    h = tape.relu(tape.affine(x, leaves[f"{net}.W1"], leaves[f"{net}.b1"]))
    return tape.squeeze_last(tape.affine(h, leaves[f"{net}.W2"], leaves[f"{net}.b2"]))


def forward(params, instance):
    """Opening probabilities for ``instance`` (or a list of instances) plus a tape."""
    g = instance if isinstance(instance, _Graph) else _Graph(instance)
    inst = g.union
    tape = Tape()
    leaves = {k: tape.var(v) for k, v in params.tensors.items()}
    a = params.disc.a
    inv_n = 1.0 / g.vertex_n

    pair = tape.concat_last([tape.const(a[:, None]), tape.const(inst.weights[None, :])])
    s = tape.segment_sum(_mlp(tape, leaves, "msg", pair), inst.indptr, inst.rows)
    if params.aggregation == "normalized-sum":
        s = tape.scale(s, inv_n[None, :])
    t = _mlp(tape, leaves, "clip", tape.concat_last([s]))

    k = params.disc.k
    triple = tape.concat_last([tape.const(a[1:, None]), tape.slice0(t, 0, k), tape.slice0(t, 1, k + 1)])
    r_hat = tape.sum0(_mlp(tape, leaves, "combine", triple))

    for layer in range(1, params.layers):
        nbr = tape.gather(r_hat, inst.indices)
        msg = _mlp(tape, leaves, f"rmsg{layer}",
                   tape.concat_last([nbr, tape.const(inst.weights)]))
        agg = tape.segment_sum(msg, inst.indptr, inst.rows)
        if params.aggregation == "normalized-sum":
            agg = tape.scale(agg, inv_n)
        r_hat = tape.add(r_hat, _mlp(tape, leaves, f"rupd{layer}", tape.concat_last([r_hat, agg])))

    z = _mlp(tape, leaves, "head", tape.concat_last([tape.const(np.log(g.vertex_n)), r_hat]))
    p = tape.clip01(z)
    if not np.all(np.isfinite(z.value)):
        raise NonFiniteActivation("network produced non-finite activations")
    ft = ForwardTape(tape, p, leaves, id(params), params.version,
                     {"t": t.value, "r_hat": r_hat.value, "z": z.value})
    return OpeningProbabilities(p.value.copy(), source="mpnn"), ft


def backward(params, ft, dE_dp):
    """Reverse pass: gradients of ``sum_x dE_dp[x] p_x`` for every tensor.

    The result is also stored in ``params.grads``.
    """
    if ft.params_id != id(params) or ft.params_version != params.version:
        raise TapeMismatch("tape was recorded for different or since-modified parameters")
    dE_dp = np.asarray(dE_dp, dtype=np.float64)
    if dE_dp.shape != ft.p.shape:
        raise TapeMismatch(f"gradient shape {dE_dp.shape} does not match {ft.p.shape}")
    for leaf in ft.leaves.values():
        leaf.grad = None
    ft.tape.backward(ft.p, dE_dp)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
             for k, v in ft.leaves.items()}
    params.grads = grads
    return grads


def loss_and_grad(params, instances, metric="linear"):
    """Mean expected cost over ``instances`` and its parameter gradient."""
    g = _Graph(instances)
    probs, ft = forward(params, g)
    loss = expected_cost(g.union, probs, metric).total / len(g.instances)
    dE = expected_cost_grad(g.union, probs, metric) / len(g.instances)
    return loss, backward(params, ft, dE)


def mean_expected_cost(params, instances, metric="linear", batch_size=16):
    costs = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        g = _Graph(chunk)
        probs, _ = forward(params, g)
        bounds = np.concatenate([[0], np.cumsum(g.sizes)])
        for i, inst in enumerate(chunk):
            costs.append(expected_cost(inst, probs.p[bounds[i]:bounds[i + 1]], metric).total)
    return float(np.mean(costs)), costs


# --- training --------------------------------------------------------------------


@dataclass
class TrainConfig:
    """``steps`` counts epochs (full passes over the training set)."""

    lr: float = 1e-3
    steps: int = 1000
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adaptive-moment"
    early_stop_patience: int = 100
    metric: str = "linear"
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


class _Optimizer:
    def __init__(self, cfg, tensors):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        for name, g in grads.items():
            if cfg.optimizer == "plain-gradient":
                update = g
            elif cfg.optimizer == "momentum":
                self.m[name] = cfg.momentum * self.m[name] + g
                update = self.m[name]
            else:
                b1, b2 = cfg.betas
                self.m[name] = b1 * self.m[name] + (1 - b1) * g
                self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
                mhat = self.m[name] / (1 - b1 ** self.t)
                vhat = self.v[name] / (1 - b2 ** self.t)
                update = mhat / (np.sqrt(vhat) + cfg.eps)
            params.tensors[name] = params.tensors[name] - cfg.lr * update
        params.version += 1


@dataclass
class TrainResult:
    params: MpnnParams
    train_loss: list
    val_loss: list
    best_epoch: int


def train(params, train_instances, val_instances=None, cfg=None, log=None):
    """Minimize the mean expected cost; return the best-validation parameters.

    ``val_loss[0]`` is the validation cost of the initial parameters, so the
    returned model is never worse on the validation set than the input.
    """
    cfg = cfg or TrainConfig()
    if not train_instances:
        raise ValueError("need a nonempty training set")
    val_instances = val_instances or train_instances
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = _Optimizer(cfg, params.tensors)

    best_val, _ = mean_expected_cost(params, val_instances, cfg.metric)
    best, best_epoch, stale = params.copy(), 0, 0
    train_curve, val_curve = [], [best_val]
    for epoch in range(1, cfg.steps + 1):
        order = rng.permutation(len(train_instances))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train_instances[i] for i in order[start:start + cfg.batch_size]]
            loss, grads = loss_and_grad(params, chunk, cfg.metric)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            losses.append(loss)
            opt.step(params, grads)
        val, _ = mean_expected_cost(params, val_instances, cfg.metric)
        if not math.isfinite(val):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        train_curve.append(float(np.mean(losses)))
        val_curve.append(val)
        if log:
            log(epoch, train_curve[-1], val)
        if val < best_val:
            best_val, best, best_epoch, stale = val, params.copy(), epoch, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    best.zero_grad()
    return TrainResult(best, train_curve, val_curve, best_epoch)


# --- evaluation on other sizes ----------------------------------------------------


def size_transfer_eval(params, instances, reference="greedy", metric="linear", exact_limit=18):
    """Expected cost and ratio against a reference cost on (larger) instances.

    ``reference`` is ``"greedy"``, ``"exact"`` (only for ``n <= exact_limit``)
    or ``"auto"`` (exact when small enough, greedy otherwise).
    """
    from .oracle import exact_opt, greedy_upper_bound

    mean_cost, costs = mean_expected_cost(params, instances, metric)
    refs = []
    for inst in instances:
        use_exact = reference == "exact" or (reference == "auto" and inst.n <= exact_limit)
        refs.append(exact_opt(inst, exact_limit).opt_value if use_exact
                    else greedy_upper_bound(inst).total)
    ratios = np.array(costs) / np.array(refs)
    return {
        "n": sorted({inst.n for inst in instances}),
        "instances": len(instances),
        "mean_expected_cost": mean_cost,
        "mean_reference": float(np.mean(refs)),
        "mean_ratio": float(ratios.mean()),
        "ratios": ratios.tolist(),
        "reference": reference,
    }


def ratio_drift(base_report, other_report):
    return abs(other_report["mean_ratio"] - base_report["mean_ratio"])
