"""Independent reference values for the test suite, frozen to ``frozen.json``.

Nothing here imports the package: every number is recomputed from first
principles in plain Python (exact rationals where possible, exhaustive
enumeration elsewhere).

Run ``python tests/oracles/compute_oracles.py`` to regenerate.
"""

import itertools
import json
import math
import os
import random
from fractions import Fraction

HERE = os.path.dirname(os.path.abspath(__file__))


def adjacency(n, edges):
    """Sorted rows of (distance, id) with the self-loop, edges with d > 1 dropped."""
    rows = [[(0.0, x)] for x in range(n)]
    for u, v, d in edges:
        if d <= 1:
            rows[u].append((d, v))
            rows[v].append((d, u))
    return [sorted(r) for r in rows]


def radius_by_scan(row):
    """Solve sum_{d_i <= r} (r - d_i) = 1 by trying every prefix size."""
    ds = [d for d, _ in row]
    for k in range(1, len(ds) + 1):
        r = (1 + sum(ds[:k])) / k
        upper = ds[k] if k < len(ds) else math.inf
        if ds[k - 1] <= r <= upper:
            return r
    raise AssertionError("no radius found")


def realized_cost(rows, opened, metric="linear"):
    """Simple algorithm on a fixed opening pattern: forced openings, nearest first-stage facility."""
    total = 0.0
    for x, row in enumerate(rows):
        if opened[x]:
            total += 1
        served = [d for d, y in row if opened[y]]
        if not served:
            total += 1  # forced open, serves itself
        elif not opened[x]:
            d = served[0]
            total += d * d if metric == "squared" else d
    return total


def expected_by_enumeration(rows, p, metric="linear"):
    n = len(rows)
    acc = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        prob = 1.0
        for b, q in zip(bits, p):
            prob *= q if b else 1 - q
        if prob:
            acc += prob * realized_cost(rows, bits, metric)
    return acc


def exact_by_enumeration(n, rows):
    """min over nonempty F of |F| + sum_x min(1, d(x, F)); ties -> lexicographic F."""
    dist = [{y: d for d, y in row} for row in rows]
    best, best_set = math.inf, None
    for size in range(1, n + 1):
        for F in itertools.combinations(range(n), size):
            cost = size + sum(min([1.0] + [dist[x][f] for f in F if f in dist[x]])
                              for x in range(n))
            if cost < best - 1e-12 or (abs(cost - best) <= 1e-12 and list(F) < list(best_set)):
                best, best_set = cost, F
    return best, list(best_set)


def random_instance(rng, n, density):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                edges.append((u, v, round(rng.uniform(0.0, 1.2), 6)))
    return edges


def main():
    out = {}

    # simple rule at n = 8, c = 2, r = 0.1
    out["probs_simple_n8_c2_r01"] = min(1.0, 2 * math.log(8) * 0.1)

    # recursive rule examples
    out["probs_recursive_empty"] = min(1.0, 6 * 0.05)
    out["probs_recursive_near"] = min(1.0, 6 * 0.01, 6 * 0.5)

    # constant-probability clique, exact rational arithmetic
    q = Fraction(1, 5)
    out["constant_p_clique_n10_q02"] = float(q * 10 + (1 - q) ** 10 * 10)

    # pair at distance 0.5
    pair = adjacency(2, [(0, 1, 0.5)])
    out["pair_radius"] = radius_by_scan(pair[0])
    out["pair_expected_p10"] = expected_by_enumeration(pair, [1.0, 0.0])
    out["pair_exact"] = exact_by_enumeration(2, pair)

    # first bin value of the message network: distances {0.2, 0.4} and self at a = 0.5
    out["init_bin_example"] = min(1.0, sum(max(0.0, 0.5 - d) for d in (0.0, 0.2, 0.4)))

    # small random instances: radii, expected costs (both metrics) and exact optima
    rng = random.Random(20240611)
    cases = []
    for case in range(12):
        n = rng.randint(2, 7)
        edges = random_instance(rng, n, rng.choice([0.3, 0.6, 0.9]))
        rows = adjacency(n, edges)
        p = [round(rng.uniform(0.0, 1.0), 4) for _ in range(n)]
        if case % 4 == 0:
            p[rng.randrange(n)] = 1.0
        exact, F = exact_by_enumeration(n, rows)
        cases.append({
            "n": n, "edges": edges, "p": p,
            "radii": [radius_by_scan(r) for r in rows],
            "expected_linear": expected_by_enumeration(rows, p, "linear"),
            "expected_squared": expected_by_enumeration(rows, p, "squared"),
            "exact_opt": exact, "exact_facilities": F,
        })
    out["random_cases"] = cases

    with open(os.path.join(HERE, "frozen.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
