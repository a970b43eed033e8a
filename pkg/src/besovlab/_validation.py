"""Input validation helpers shared across the package."""

from __future__ import annotations

import math
from numbers import Real

import numpy as np


class HypothesisError(ValueError):
    """Raised when a configuration violates the hypothesis of an estimate.

    The message always names the violated condition, e.g.
    ``"s1+s2 <= N*max(0,2/p-1)"``.
    """

    def __init__(self, condition, detail=""):
        self.condition = condition
        msg = f"hypothesis violated: {condition}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(ValueError):
    pass


def check_exponent(p, name="p"):
    """Return ``p`` as a float in [1, inf], rejecting anything else."""
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    if not isinstance(p, Real) or math.isnan(p):
        raise ValueError(f"{name} must be a real number in [1, inf], got {p!r}")
    p = float(p)
    if p < 1.0:
        raise ValueError(f"{name} must be >= 1, got {p}")
    return p


def check_finite(values, what="field"):
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError(f"{what} contains {bad} non-finite entries")
    return arr


def check_positive(x, name):
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"{name} must be a positive finite number, got {x}")
    return x


def check_multi_index(gamma, dim):
    gamma = tuple(int(g) for g in gamma)
    if len(gamma) != dim:
        raise ValueError(f"multi-index {gamma} has length {len(gamma)}, expected {dim}")
    if any(g < 0 for g in gamma):
        raise ValueError(f"multi-index {gamma} has negative entries")
    return gamma


def same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def lebesgue_dual(p):
    """Conjugate exponent p' with 1/p + 1/p' = 1."""
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p
