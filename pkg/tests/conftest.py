import json
import os
import sys

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from unifl import build_instance
from unifl.datasets import geo_config
from unifl.instance import generate_geometric

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "fixtures")

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(HERE, "oracles", "frozen.json"), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def pair():
    return build_instance(2, [(0, 1, 0.5)], id="pair")


@pytest.fixture
def pair_path():
    return os.path.join(FIXTURES, "pair.unifl")


def geo(n, seed, dim=2):
    return generate_geometric(geo_config(n, dim, seed))


def random_graph(rng, n, density=0.5, max_w=1.3):
    u, v = np.triu_indices(n, 1)
    keep = rng.random(len(u)) < density
    w = rng.uniform(0.0, max_w, int(keep.sum()))
    return build_instance(n, np.column_stack([u[keep], v[keep], w]))


@st.composite
def instances(draw, min_n=1, max_n=12):
    """Random edge-list instances, including repeated distances and pruned edges."""
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    weight = st.one_of(st.floats(0.0, 1.5, allow_nan=False), st.sampled_from([0.0, 0.25, 0.5, 1.0]))
    edges = [(u, v, draw(weight)) for u, v in chosen]
    return build_instance(n, edges)


@st.composite
def instance_and_probs(draw, min_n=1, max_n=10):
    inst = draw(instances(min_n, max_n))
    p = draw(st.lists(st.one_of(st.floats(0.0, 1.0), st.sampled_from([0.0, 1.0])),
                      min_size=inst.n, max_size=inst.n))
    return inst, np.array(p)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in results:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
