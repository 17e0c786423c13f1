"""Closed-form expected cost of independent facility opening, and its gradient.

Each vertex ``f`` opens independently with probability ``p_f``. A vertex
with an open neighbor (self included) connects to the first open one in its
``(distance, id)``-sorted adjacency row; otherwise it opens itself. The
expected cost is then a polynomial in ``p``:

``E = sum_f p_f + sum_f prod_{x in N(f)} (1 - p_x)
      + sum_x sum_{j} m(x, f_j) p_{f_j} prod_{i < j} (1 - p_{f_i})``

where ``f_1, f_2, ...`` is row ``x`` in sorted order and ``m`` is the distance
(``linear``) or squared distance (``squared``). Sorting by ``(distance, id)``
makes the "strictly closer" products well defined under ties.

Products are never divided: leave-one-out factors come from exclusive
prefix/suffix products, so probabilities of exactly 0 or 1 are handled
without special cases.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ProbOutOfRange

METRICS = ("linear", "squared")


@dataclass(frozen=True)
class ExpectedCostBreakdown:
    open_direct: float
    open_forced: float
    connection: float

    @property
    def total(self):
        return self.open_direct + self.open_forced + self.connection

    def as_dict(self):
        return {"open_direct": self.open_direct, "open_forced": self.open_forced,
                "connection": self.connection, "total": self.total}


def _check(instance, p, metric):
    p = np.asarray(getattr(p, "p", p), dtype=np.float64)
    if p.shape != (instance.n,):
        raise ProbOutOfRange(f"expected {instance.n} probabilities, got shape {p.shape}")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ProbOutOfRange("probabilities must lie in [0, 1]")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    return p


def _terms(instance, p, metric):
    idx, w, mask = instance.padded
    pp = np.where(mask, p[idx], 0.0)
    q = 1.0 - pp
    m = w * w if metric == "squared" else w
    ones = np.ones((instance.n, 1))
    # prefix[:, j] = prod_{i < j} q_i, suffix[:, j] = prod_{i > j} q_i
    prefix = np.cumprod(np.hstack([ones, q[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, q[:, :0:-1]]), axis=1)[:, ::-1]
    return idx, mask, pp, q, m, prefix, suffix


def _per_vertex(instance, p, metric):
    """Per-row forced-open probability and expected connection cost."""
    idx, mask, pp, q, m, prefix, suffix = _terms(instance, p, metric)
    forced = prefix[:, -1] * q[:, -1]
    connection = np.sum(m * pp * prefix, axis=1)
    return forced, connection


def expected_cost(instance, probs, metric="linear"):
    """Exact expected cost of sampling with ``probs`` followed by forced opening."""
    p = _check(instance, probs, metric)
    if instance.n == 0:
        return ExpectedCostBreakdown(0.0, 0.0, 0.0)
    forced, connection = _per_vertex(instance, p, metric)
    return ExpectedCostBreakdown(float(np.sum(p)), float(np.sum(forced)),
                                 float(np.sum(connection)))


def expected_cost_grad(instance, probs, metric="linear"):
    """Gradient of the expected total cost with respect to every ``p_v``."""
    p = _check(instance, probs, metric)
    idx, mask, pp, q, m, prefix, suffix = _terms(instance, p, metric)
    n, width = pp.shape

    # tail[:, l] = sum_{j > l} m_j p_j prod_{l < i < j} q_i, by backward recursion
    tail = np.zeros((n, width))
    for col in range(width - 2, -1, -1):
        tail[:, col] = m[:, col + 1] * pp[:, col + 1] + q[:, col + 1] * tail[:, col + 1]

    d_forced = -prefix * suffix
    d_conn = prefix * (m - tail)
    local = np.where(mask, d_forced + d_conn, 0.0)
    grad = np.ones(n)
    grad += np.bincount(idx[mask], weights=local[mask], minlength=n)
    return grad


def expected_cost_of_constant_p(n, q):
    """Expected cost on an ``n``-clique whose distances vanish, all ``p_x = q``."""
    if n < 1 or not 0.0 <= q <= 1.0:
        raise ValueError("need n >= 1 and q in [0, 1]")
    return q * n + (1.0 - q) ** n * n
