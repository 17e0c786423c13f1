"""Input validation helpers used by the estimators and the CLI."""

import numbers

import numpy as np

from .errors import NonPositiveC, ProbOutOfRange
from .instance import UniflInstance


def check_instance(instance):
    if not isinstance(instance, UniflInstance):
        raise TypeError(f"expected a UniflInstance, got {type(instance).__name__}")
    return instance


def check_instances(instances):
    """Accept one instance or a nonempty iterable of them; always return a list."""
    if isinstance(instances, UniflInstance):
        return [instances]
    out = [check_instance(inst) for inst in instances]
    if not out:
        raise ValueError("need at least one instance")
    return out


def check_probabilities(instance, p):
    p = np.asarray(getattr(p, "p", p), dtype=np.float64)
    if p.shape != (instance.n,):
        raise ProbOutOfRange(f"expected {instance.n} probabilities, got shape {p.shape}")
    if not np.all((p >= 0) & (p <= 1)):
        raise ProbOutOfRange("probabilities must lie in [0, 1]")
    return p


def check_positive(value, name="c"):
    if not isinstance(value, numbers.Real) or not value > 0:
        if name == "c":
            raise NonPositiveC(value)
        raise ValueError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_random_state(seed):
    """Map ``None`` to 0 so runs never depend on wall-clock entropy."""
    if seed is None:
        return 0
    if not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"random_state must be a non-negative integer, got {seed!r}")
    return int(seed)
