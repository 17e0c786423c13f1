"""Ground truth for verification: exhaustive optimum, bisection radii, ILP export, greedy bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .sampling import _make_solution

EXACT_LIMIT = 18
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ExactResult:
    opt_value: float
    opt_facilities: frozenset
    explored: int


def _capped_distances(instance):
    """Dense ``min(1, d)`` matrix with missing pairs at 1."""
    D = np.ones((instance.n, instance.n))
    D[instance.rows, instance.indices] = instance.weights
    return D


def exact_opt(instance, limit=EXACT_LIMIT):
    """Exhaustive minimum of ``|F| + sum_x min(1, d(x, F))`` over nonempty ``F``.

    A vertex with no open neighbor pays 1, the same as opening it, so the
    minimum equals the optimum of the original problem. Per-vertex service
    costs for every subset are built by the recurrence
    ``cost[mask | bit] = min(cost[mask], D[:, bit])`` in blocks; subsets whose
    size already exceeds the greedy upper bound are skipped. Ties are
    resolved toward the lexicographically smallest facility set.
    """
    n = instance.n
    if n > limit:
        raise TooLarge(n, limit)
    D = _capped_distances(instance)
    upper = greedy_upper_bound(instance).total

    size = 1 << n
    service = np.empty((size, n))
    service[0] = 1.0
    for b in range(n):
        lo = 1 << b
        np.minimum(service[:lo], D[:, b], out=service[lo:2 * lo])
    masks = np.arange(size, dtype=np.int64)
    popcount = np.zeros(size, dtype=np.int64)
    for b in range(n):
        popcount += (masks >> b) & 1
    candidate = (popcount >= 1) & (popcount <= upper + TIE_TOL)
    totals = np.where(candidate, popcount + service.sum(axis=1), np.inf)

    best = totals.min()
    ties = np.nonzero(totals <= best + TIE_TOL)[0]
    sets = [tuple(b for b in range(n) if (m >> b) & 1) for m in ties]
    chosen = solution_from_facilities(instance, min(sets)).facilities
    return ExactResult(float(best), frozenset(chosen), int(candidate.sum()))


def solution_from_facilities(instance, facilities):
    """Feasible solution serving every vertex from its closest member of ``facilities``.

    Vertices without an adjacent facility open themselves.
    """
    idx, _, mask = instance.padded
    is_f = np.zeros(instance.n, dtype=bool)
    is_f[list(facilities)] = True
    hit = is_f[idx] & mask
    has = hit.any(axis=1)
    pos = hit.argmax(axis=1)
    x = np.arange(instance.n)
    assignment = np.where(has & ~is_f, idx[x, pos], x)
    return _make_solution(instance, assignment, forced=int(np.sum(~has)))


def bisect_radii(instance, tol=1e-10):
    """Radii of all vertices by bisection on the monotone ``phi_x(r) - 1``."""
    from .radius import phi

    lo = np.zeros(instance.n)
    hi = np.ones(instance.n)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        above = phi(instance, mid) >= 1.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def bisect_radius(instance, x, tol=1e-10):
    """Radius of a single vertex by bisection."""
    idx, w = instance.neighbors(x)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.sum(np.maximum(mid - w, 0.0)) >= 1.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def ilp_text(instance):
    """The UniFL integer program in CPLEX LP format.

    Variables ``y_i`` open facility ``i``; ``e_i_j`` assigns client ``i`` to
    ``j`` for every stored directed edge, self-loops included.
    """
    rows, cols, w = instance.rows, instance.indices, instance.weights
    lines = ["\\ UniFL instance " + instance.id, "Minimize", " obj:"]
    terms = [f"y_{i}" for i in range(instance.n)]
    terms += [f"{float(wij)!r} e_{i}_{j}" for i, j, wij in zip(rows, cols, w)]
    lines.extend(_wrap(terms))
    lines.append("Subject To")
    for i, j in zip(rows, cols):
        lines.append(f" open_{i}_{j}: e_{i}_{j} - y_{j} <= 0")
    for i in range(instance.n):
        lo, hi = instance.indptr[i], instance.indptr[i + 1]
        row = " + ".join(f"e_{i}_{j}" for j in cols[lo:hi])
        lines.append(f" assign_{i}: {row} = 1")
    lines.append("Binary")
    lines.extend(f" y_{i}" for i in range(instance.n))
    lines.extend(f" e_{i}_{j}" for i, j in zip(rows, cols))
    lines.append("End")
    return "\n".join(lines) + "\n"


def _wrap(terms, per_line=8):
    out = []
    for start in range(0, len(terms), per_line):
        chunk = " + ".join(terms[start:start + per_line])
        out.append(("   " if start == 0 else "   + ") + chunk)
    return out


def export_ilp(instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ilp_text(instance))


def greedy_upper_bound(instance):
    """Greedy opening: repeatedly add the facility with the largest cost decrease.

    Starts from no facilities (every vertex paying 1) and stops when no
    addition lowers ``|F| + sum_x min(1, d(x, F))``. Uncovered vertices then
    open themselves, which leaves the cost unchanged.
    """
    n = instance.n
    rows, cols, w = instance.rows, instance.indices, instance.weights
    service = np.ones(n)
    is_f = np.zeros(n, dtype=bool)
    # gain of opening f: sum over its neighbors x of max(0, service[x] - d(x, f)) - 1
    while True:
        saving = np.maximum(service[cols] - w, 0.0)
        gain = np.bincount(rows, weights=saving, minlength=n) - 1.0
        gain[is_f] = -np.inf
        f = int(np.argmax(gain))
        if not gain[f] > TIE_TOL:
            break
        is_f[f] = True
        lo, hi = instance.indptr[f], instance.indptr[f + 1]
        nb = cols[lo:hi]
        service[nb] = np.minimum(service[nb], w[lo:hi])
    return solution_from_facilities(instance, np.nonzero(is_f)[0])
