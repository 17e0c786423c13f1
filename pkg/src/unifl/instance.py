"""UniFL instances: graph encoding, synthetic generation and text serialization.

An instance is a finite metric space stored as a sparse edge-weighted graph.
Only pairs at distance at most 1 are kept (serving a client from farther
away is never cheaper than opening a facility at it), and every vertex
carries a self-loop of weight 0. Adjacency is stored in CSR form with every
row sorted by ``(distance, neighbor id)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DuplicateEdge,
    InvariantViolation,
    NegativeDistance,
    ParseError,
    VertexOutOfRange,
)

FORMAT_HEADER = "unifl"
FORMAT_VERSION = "v1"
COORD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class UniflInstance:
    """Immutable UniFL instance in CSR form.

    Row ``x`` of the adjacency is ``indices[indptr[x]:indptr[x+1]]`` with
    matching ``weights``; it always contains ``x`` itself at distance 0.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    coords: np.ndarray | None = None
    id: str = field(default="instance", compare=False)

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights, self.coords):
            if arr is not None:
                arr.setflags(write=False)

    # --- views ---------------------------------------------------------------

    @property
    def adjacency(self):
        """Per-vertex list of ``(neighbor, distance)`` pairs, self-loop included."""
        out = []
        for x in range(self.n):
            lo, hi = self.indptr[x], self.indptr[x + 1]
            out.append(list(zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist())))
        return out

    def neighbors(self, x):
        lo, hi = self.indptr[x], self.indptr[x + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    @property
    def nnz(self):
        return int(self.indptr[-1])

    @cached_property
    def rows(self):
        """Source vertex of every stored (directed) entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    @cached_property
    def degrees(self):
        """Entries per row, self-loop included."""
        return np.diff(self.indptr)

    @cached_property
    def padded(self):
        """``(idx, w, mask)`` arrays of shape ``(n, max_degree)``.

        Padding slots hold index 0, weight 0 and ``mask=False``.
        """
        deg = self.degrees
        width = int(deg.max()) if self.n else 0
        pos = np.arange(self.nnz) - np.repeat(self.indptr[:-1], deg)
        idx = np.zeros((self.n, width), dtype=np.int64)
        w = np.zeros((self.n, width))
        mask = np.zeros((self.n, width), dtype=bool)
        idx[self.rows, pos] = self.indices
        w[self.rows, pos] = self.weights
        mask[self.rows, pos] = True
        return idx, w, mask

    def edge_list(self):
        """Undirected edges ``(u, v, w)`` with ``u < v``, self-loops omitted."""
        keep = self.rows < self.indices
        return list(zip(self.rows[keep].tolist(), self.indices[keep].tolist(),
                        self.weights[keep].tolist()))

    def distance(self, x, y):
        """Stored distance between ``x`` and ``y``, or ``inf`` when not adjacent."""
        idx, w = self.neighbors(x)
        hit = np.nonzero(idx == y)[0]
        return float(w[hit[0]]) if hit.size else float("inf")

    def mean_degree(self, include_self=False):
        deg = self.degrees if include_self else self.degrees - 1
        return float(deg.mean()) if self.n else 0.0

    # --- comparison ----------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, UniflInstance):
            return NotImplemented
        if self.n != other.n or (self.coords is None) != (other.coords is None):
            return False
        same = (np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.weights, other.weights))
        if same and self.coords is not None:
            same = np.array_equal(self.coords, other.coords)
        return same

    __hash__ = None

    def check_invariants(self):
        """Raise :class:`InvariantViolation` if any structural invariant fails."""
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0:
            raise InvariantViolation("malformed indptr")
        w, idx, rows = self.weights, self.indices, self.rows
        if np.any(w < 0) or np.any(w > 1):
            raise InvariantViolation("stored distance outside [0, 1]")
        selfs = np.bincount(rows[idx == rows], minlength=self.n)
        if np.any(selfs != 1):
            raise InvariantViolation("every vertex needs exactly one self-loop")
        if np.any(w[idx == rows] != 0):
            raise InvariantViolation("self-loop with nonzero weight")
        same_row = rows[1:] == rows[:-1]
        dec = (w[1:] < w[:-1]) | ((w[1:] == w[:-1]) & (idx[1:] <= idx[:-1]))
        if np.any(same_row & dec):
            raise InvariantViolation("adjacency row not sorted by (distance, id)")
        fwd = {(int(u), int(v)): float(d) for u, v, d in zip(rows, idx, w)}
        for (u, v), d in fwd.items():
            if fwd.get((v, u)) != d:
                raise InvariantViolation(f"asymmetric edge ({u}, {v})")
        if self.coords is not None:
            if self.coords.shape[0] != self.n:
                raise InvariantViolation("coordinate count differs from n")
            geo = np.linalg.norm(self.coords[rows] - self.coords[idx], axis=1)
            if np.any(np.abs(geo - w) > COORD_TOL):
                raise InvariantViolation("stored distance disagrees with coordinates")


def _from_arrays(n, u, v, w, coords=None, id="instance"):
    """Assemble a CSR instance from validated undirected edge arrays (u != v, w <= 1)."""
    loops = np.arange(n)
    src = np.concatenate([u, v, loops]).astype(np.int64)
    dst = np.concatenate([v, u, loops]).astype(np.int64)
    wt = np.concatenate([w, w, np.zeros(n)]).astype(np.float64)
    order = np.lexsort((dst, wt, src))
    src, dst, wt = src[order], dst[order], wt[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    if coords is not None:
        coords = np.array(coords, dtype=np.float64)
    return UniflInstance(n=n, indptr=indptr, indices=dst, weights=wt, coords=coords, id=id)


def build_instance(n, edges, coords=None, id="instance"):
    """Build an instance from an undirected edge list ``[(u, v, distance), ...]``.

    Edges longer than 1 are dropped and self-loops are added. Duplicate
    undirected edges (in either orientation) and explicit self-edges are
    rejected.
    """
    n = int(n)
    if n < 1:
        raise InvariantViolation("an instance needs at least one vertex")
    arr = np.asarray(edges, dtype=np.float64).reshape(-1, 3)
    u, v, d = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    dup = np.ones(len(arr), dtype=bool)
    dup[np.unique(lo * n + hi, return_index=True)[1]] = False
    checks = [(lo < 0) | (hi >= n), np.isnan(d) | (d == -np.inf), d < 0, (u == v) | dup]
    bad = np.flatnonzero(np.logical_or.reduce(checks)) if len(arr) else []
    if len(bad):
        i = bad[0]
        ui, vi, di = int(u[i]), int(v[i]), float(d[i])
        if checks[0][i]:
            raise VertexOutOfRange(ui if not 0 <= ui < n else vi, n)
        if checks[1][i]:
            raise InvariantViolation(f"non-finite distance on edge ({ui}, {vi})")
        if checks[2][i]:
            raise NegativeDistance(ui, vi, di)
        raise DuplicateEdge(ui, vi)
    keep = d <= 1.0
    return _from_arrays(n, u[keep], v[keep], d[keep], coords=coords, id=id)


def from_points(points, id="points"):
    """Instance on Euclidean points with an edge for every pair within distance 1."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < 1:
        raise InvariantViolation("an instance needs at least one vertex")
    pairs = cKDTree(points).query_pairs(1.0, output_type="ndarray")
    u, v = pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64)
    w = np.linalg.norm(points[u] - points[v], axis=1)
    keep = w <= 1.0  # the tree's own radius test may differ in the last ulp
    return _from_arrays(n, u[keep], v[keep], w[keep], coords=points, id=id)


# --- synthetic generation ---------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    """Gaussian-mixture point generator.

    Centroids are uniform in ``[0, domain_scale]^dim``; each point picks a
    component uniformly and adds isotropic noise of std ``component_std``.
    """

    n: int
    dim: int = 2
    components: int = 100
    component_std: float = 0.6
    domain_scale: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.dim < 1 or self.components < 1:
            raise ValueError("n, dim and components must all be >= 1")
        if not (self.component_std > 0 and self.domain_scale > 0):
            raise ValueError("component_std and domain_scale must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def sample_points(self):
        rng = np.random.default_rng(self.seed)
        centroids = rng.uniform(0.0, self.domain_scale, size=(self.components, self.dim))
        labels = rng.integers(0, self.components, size=self.n)
        noise = rng.normal(0.0, self.component_std, size=(self.n, self.dim))
        return centroids[labels] + noise


def generate_geometric(cfg):
    """Sample a random geometric instance from ``cfg`` (deterministic per seed)."""
    name = f"geo-n{cfg.n}-d{cfg.dim}-s{cfg.seed}"
    return from_points(cfg.sample_points(), id=name)


# --- text format ------------------------------------------------------------------


def dumps(instance):
    lines = [f"{FORMAT_HEADER} {FORMAT_VERSION} {instance.n}"]
    lines.extend(f"{u} {v} {w!r}" for u, v, w in instance.edge_list())
    if instance.coords is not None:
        lines.append(f"coords {instance.coords.shape[1]}")
        lines.extend(" ".join(repr(float(c)) for c in row) for row in instance.coords)
    return "\n".join(lines) + "\n"


def loads(text, id="instance"):
    """Parse the text format produced by :func:`dumps`."""
    lines = text.splitlines()
    body = [(i + 1, ln.split()) for i, ln in enumerate(lines)
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise ParseError(1, "empty file")
    lineno, head = body[0]
    if len(head) != 3 or head[0] != FORMAT_HEADER or head[1] != FORMAT_VERSION:
        raise ParseError(lineno, f"expected header '{FORMAT_HEADER} {FORMAT_VERSION} <n>'")
    try:
        n = int(head[2])
    except ValueError:
        raise ParseError(lineno, "vertex count is not an integer") from None
    if n < 1:
        raise ParseError(lineno, "vertex count must be >= 1")

    edges, coords = [], None
    pos = 1
    while pos < len(body):
        lineno, tok = body[pos]
        if tok[0] == "coords":
            if len(tok) != 2:
                raise ParseError(lineno, "expected 'coords <dim>'")
            dim = _parse_int(tok[1], lineno)
            rows = body[pos + 1:pos + 1 + n]
            if len(rows) != n or len(body) != pos + 1 + n:
                raise ParseError(lineno, f"coords section needs exactly {n} rows")
            coords = np.array([_parse_floats(t, dim, ln) for ln, t in rows])
            break
        if len(tok) != 3:
            raise ParseError(lineno, "expected '<u> <v> <w>'")
        u, v = _parse_int(tok[0], lineno), _parse_int(tok[1], lineno)
        try:
            w = float(tok[2])
        except ValueError:
            raise ParseError(lineno, f"bad distance {tok[2]!r}") from None
        edges.append((u, v, w))
        pos += 1

    inst = build_instance(n, edges, coords=coords, id=id)
    if coords is not None:
        inst.check_invariants()
    return inst


def _parse_int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(lineno, f"expected integer, got {tok!r}") from None


def _parse_floats(tok, dim, lineno):
    if len(tok) != dim:
        raise ParseError(lineno, f"expected {dim} coordinates")
    try:
        return [float(t) for t in tok]
    except ValueError:
        raise ParseError(lineno, "bad coordinate") from None


def save_instance(instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(instance))


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, id=os.path.splitext(os.path.basename(path))[0])


def disjoint_union(instances, id="batch"):
    """Concatenate instances into one graph with no edges between the parts."""
    offsets = np.cumsum([0] + [inst.n for inst in instances])
    nnz = np.cumsum([0] + [inst.nnz for inst in instances])
    indptr = np.concatenate([[0]] + [inst.indptr[1:] + nnz[i] for i, inst in enumerate(instances)])
    indices = np.concatenate([inst.indices + offsets[i] for i, inst in enumerate(instances)])
    weights = np.concatenate([inst.weights for inst in instances])
    return UniflInstance(n=int(offsets[-1]), indptr=indptr.astype(np.int64),
                         indices=indices.astype(np.int64), weights=weights, id=id)
