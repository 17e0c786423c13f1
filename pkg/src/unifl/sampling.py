"""Randomized UniFL algorithms and solution evaluation.

``sample_simple`` opens every vertex independently, then lets each vertex
without an open neighbor open itself. ``run_recursion`` repeatedly opens
facilities with probability ``min(1, c d(x, F), c r_x)`` and only assigns
clients whose closest open facility lies within ``6 r_x``; the rest are
retried in the next round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import InfeasibleSolution, NonPositiveC, ProbOutOfRange
from .radius import compute_radii

ASSIGN_FACTOR = 6.0
DEFAULT_MAX_ROUNDS = 100
MC_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class OpeningProbabilities:
    p: np.ndarray
    source: str = "manual"

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or not np.all((p >= 0.0) & (p <= 1.0)):
            raise ProbOutOfRange("opening probabilities must be a vector in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class Solution:
    """A realized facility set with its assignment and cost decomposition.

    ``assignment[x]`` is the facility serving ``x`` (``x`` itself when open).
    ``capped`` lists the vertices still unserved when the recursive driver
    hit its round cap; ``fallback`` is the subset assigned to an already open
    neighbor, exempt from the ``6 r_x`` service radius. The rest opened
    themselves.
    """

    facilities: frozenset
    assignment: np.ndarray
    open_cost: float
    connection_cost: float
    total: float
    rounds: int = 0
    forced_opens: int = 0
    fallback: frozenset = frozenset()
    capped: frozenset = frozenset()

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        return (self.facilities == other.facilities
                and np.array_equal(self.assignment, other.assignment)
                and (self.open_cost, self.connection_cost, self.total, self.rounds,
                     self.forced_opens, self.fallback, self.capped)
                == (other.open_cost, other.connection_cost, other.total, other.rounds,
                    other.forced_opens, other.fallback, other.capped))

    __hash__ = None

    def as_dict(self):
        return {"facilities": sorted(self.facilities), "assignment": self.assignment.tolist(),
                "open_cost": self.open_cost, "connection_cost": self.connection_cost,
                "total": self.total, "rounds": self.rounds, "forced_opens": self.forced_opens}


def _check_c(c):
    if not c > 0:
        raise NonPositiveC(c)


def _as_p(instance, probs):
    p = probs.p if isinstance(probs, OpeningProbabilities) else np.asarray(probs, dtype=float)
    if p.shape != (instance.n,):
        raise ProbOutOfRange(f"expected {instance.n} probabilities, got shape {p.shape}")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ProbOutOfRange("opening probabilities must lie in [0, 1]")
    return p


def _make_solution(instance, assignment, rounds=0, forced=0, fallback=(), capped=()):
    assignment = np.asarray(assignment, dtype=np.int64)
    facilities = frozenset(np.unique(assignment).tolist())
    open_cost = float(len(facilities))
    clients = np.nonzero(assignment != np.arange(instance.n))[0]
    conn = float(np.sum([instance.distance(x, assignment[x]) for x in clients])) if clients.size else 0.0
    assignment.setflags(write=False)
    return Solution(facilities, assignment, open_cost, conn, open_cost + conn,
                    rounds=rounds, forced_opens=int(forced), fallback=frozenset(fallback),
                    capped=frozenset(capped))


# --- SimpleUniformFL -------------------------------------------------------------


def probs_simple(instance, radii, c):
    """``p_x = min(1, c ln(n) r_x)``."""
    _check_c(c)
    r = getattr(radii, "r", radii)
    p = np.minimum(1.0, c * math.log(instance.n) * np.asarray(r, dtype=float))
    return OpeningProbabilities(p, source="fixed-c")


def _first_open(instance, opened):
    """For a ``(S, n)`` boolean open matrix return ``(has_open, position)`` per row slot.

    ``position[s, x]`` is the index within row ``x``'s sorted adjacency of the
    first open neighbor in sample ``s``.
    """
    idx, _, mask = instance.padded
    hit = opened[:, idx] & mask
    return hit.any(axis=2), hit.argmax(axis=2)


def sample_simple(instance, probs, seed, sample_index=0):
    """One realization of independent opening followed by forced opening.

    Clients connect to their closest facility among the independently opened
    ones (ties broken by id); vertices without such a neighbor open themselves.
    """
    p = _as_p(instance, probs)
    opened = _rng.uniform_row(seed, sample_index, instance.n) < p
    has, pos = _first_open(instance, opened[None, :])
    idx, _, _ = instance.padded
    x = np.arange(instance.n)
    assignment = np.where(has[0] & ~opened, idx[x, pos[0]], x)
    return _make_solution(instance, assignment, forced=int(np.sum(~has[0])))


def monte_carlo_expected_cost(instance, probs, samples, seed, metric="linear", return_parts=False):
    """Mean and standard error of the realized total over ``samples`` draws.

    Sample ``s`` uses exactly the random stream of ``sample_simple(..., seed, s)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    p = _as_p(instance, probs)
    idx, w, _ = instance.padded
    m = w * w if metric == "squared" else w
    chunk = max(1, MC_CHUNK_ELEMENTS // max(1, idx.size))
    totals, opens, conns = [], [], []
    for start in range(0, samples, chunk):
        count = min(chunk, samples - start)
        opened = _rng.uniform_rows(seed, start, count, instance.n) < p
        has, pos = _first_open(instance, opened)
        n_open = opened.sum(axis=1) + (~has).sum(axis=1)
        conn = np.where(has, m[np.arange(instance.n)[None, :], pos], 0.0).sum(axis=1)
        opens.append(n_open)
        conns.append(conn)
        totals.append(n_open + conn)
    totals = np.concatenate(totals)
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    if return_parts:
        return mean, se, float(np.concatenate(opens).mean()), float(np.concatenate(conns).mean())
    return mean, se


# --- recursive driver ------------------------------------------------------------


def _dist_to_set(instance, in_set):
    """``d(x, F)`` over stored edges, ``inf`` when no member of ``F`` is adjacent."""
    hit = in_set[instance.indices]
    d = np.full(instance.n, np.inf)
    np.minimum.at(d, instance.rows[hit], instance.weights[hit])
    return d


def probs_recursive(instance, radii, open_set, c):
    """``p_x = min(1, c d(x, F), c r_x)``; the distance term is dropped when ``F`` is empty."""
    _check_c(c)
    r = np.asarray(getattr(radii, "r", radii), dtype=float)
    in_set = np.zeros(instance.n, dtype=bool)
    in_set[list(open_set)] = True
    p = np.minimum(1.0, c * r)
    if in_set.any():
        p = np.minimum(p, c * _dist_to_set(instance, in_set))
    return OpeningProbabilities(p, source="fixed-c")


def _induced_radii(instance, alive):
    """Radii recomputed on the subgraph induced by ``alive`` (1 elsewhere)."""
    verts = np.nonzero(alive)[0]
    remap = -np.ones(instance.n, dtype=np.int64)
    remap[verts] = np.arange(verts.size)
    keep = (remap[instance.rows] >= 0) & (remap[instance.indices] >= 0)
    rows = remap[instance.rows[keep]]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=verts.size))])
    sub = type(instance)(n=int(verts.size), indptr=indptr,
                         indices=remap[instance.indices[keep]], weights=instance.weights[keep])
    r = np.ones(instance.n)
    r[verts] = compute_radii(sub).r
    return r


def run_recursion(instance, radii, c, max_rounds=DEFAULT_MAX_ROUNDS, seed=0,
                  sample_index=0, recompute_radii=False):
    """Recursive opening until every vertex is served.

    Radii are computed once on the full instance unless ``recompute_radii``.
    After ``max_rounds`` rounds, leftover vertices with an open neighbor are
    assigned to the closest one (``fallback``) and the others open themselves.
    """
    _check_c(c)
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    n = instance.n
    r = np.asarray(getattr(radii, "r", radii), dtype=float)
    idx, w, mask = instance.padded
    is_open = np.zeros(n, dtype=bool)
    assignment = -np.ones(n, dtype=np.int64)
    remaining = np.ones(n, dtype=bool)
    rounds = 0
    while remaining.any() and rounds < max_rounds:
        r_round = _induced_radii(instance, remaining) if recompute_radii else r
        p = np.minimum(1.0, c * r_round)
        if is_open.any():
            p = np.minimum(p, c * _dist_to_set(instance, is_open))
        u = _rng.uniform_row(seed, sample_index * max_rounds + rounds, n)
        is_open |= remaining & (u < p)
        rounds += 1

        hit = is_open[idx] & mask
        has = hit.any(axis=1)
        pos = hit.argmax(axis=1)
        near = w[np.arange(n), pos]
        ok = remaining & has & (near <= ASSIGN_FACTOR * r_round)
        assignment[ok] = idx[np.nonzero(ok)[0], pos[ok]]
        remaining &= ~ok

    fallback, forced = [], 0
    capped = np.nonzero(remaining)[0].tolist()
    if remaining.any():
        hit = is_open[idx] & mask
        for x in np.nonzero(remaining)[0]:
            row = np.nonzero(hit[x])[0]
            if row.size:
                assignment[x] = idx[x, row[0]]
                fallback.append(int(x))
            else:
                assignment[x] = x
                forced += 1
    # previously opened vertices always serve themselves
    opened = np.nonzero(is_open)[0]
    assignment[opened] = opened
    return _make_solution(instance, assignment, rounds=rounds, forced=forced, fallback=fallback,
                          capped=capped)


# --- evaluation ------------------------------------------------------------------


def eval_solution(instance, solution):
    """Recompute ``(open_cost, connection_cost, total)`` from the assignment."""
    a = np.asarray(solution.assignment)
    if a.shape != (instance.n,):
        raise InfeasibleSolution(0, "assignment length differs from n")
    facilities = set(int(f) for f in solution.facilities)
    dists = []
    for x in range(instance.n):
        f = int(a[x])
        if f == x:
            if x not in facilities:
                raise InfeasibleSolution(x, "self-assigned but not open")
            continue
        if f not in facilities:
            raise InfeasibleSolution(x, f"assigned to closed vertex {f}")
        d = instance.distance(x, f)
        if not np.isfinite(d):
            raise InfeasibleSolution(x, f"no stored edge to facility {f}")
        dists.append(d)
    for f in facilities:
        if int(a[f]) != f:
            raise InfeasibleSolution(f, "open facility not serving itself")
    open_cost = float(len(facilities))
    conn = float(np.sum(dists)) if dists else 0.0  # same reduction as _make_solution
    return open_cost, conn, open_cost + conn


# --- tuning ----------------------------------------------------------------------


def log_grid(lo=1e-3, hi=10.0, num=100):
    return np.geomspace(lo, hi, num)


def mean_cost_for_c(instances, algo, c, samples=None, seed=0, max_rounds=DEFAULT_MAX_ROUNDS,
                    radii=None):
    """Mean (over instances) expected or Monte Carlo total for a given ``c``.

    With ``algo='simple'`` and ``samples=None`` the exact expected cost is used.
    """
    from .expectation import expected_cost  # local: avoids an import cycle at load

    radii = radii or [compute_radii(inst) for inst in instances]
    vals = []
    for i, (inst, rad) in enumerate(zip(instances, radii)):
        if algo == "simple":
            probs = probs_simple(inst, rad, c)
            if samples is None:
                vals.append(expected_cost(inst, probs).total)
            else:
                vals.append(monte_carlo_expected_cost(inst, probs, samples, seed + i)[0])
        elif algo == "recursive":
            k = samples or 100
            vals.append(np.mean([run_recursion(inst, rad, c, max_rounds, seed + i, s).total
                                 for s in range(k)]))
        else:
            raise ValueError(f"unknown algo {algo!r}")
    return float(np.mean(vals))


def grid_search_c(instances, algo="simple", grid=None, samples=None, seed=0,
                  max_rounds=DEFAULT_MAX_ROUNDS, return_curve=False):
    """Return the grid value of ``c`` with the lowest mean total (ties -> smaller ``c``)."""
    if not instances:
        raise ValueError("need at least one instance")
    grid = np.sort(np.asarray(log_grid() if grid is None else grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty grid")
    radii = [compute_radii(inst) for inst in instances]
    curve = [mean_cost_for_c(instances, algo, float(c), samples, seed, max_rounds, radii)
             for c in grid]
    best = float(grid[int(np.argmin(curve))])  # argmin returns the first minimum
    return (best, np.array(curve)) if return_curve else best
