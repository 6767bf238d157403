"""Shared instance builders and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from lipext import instance_from_arrays
from lipext.cli import grid_instance

__all__ = ["grid_instance"]


def random_instance(seed, n_max=200, c_max=50, dim_max=5):
    """Deterministic random Euclidean cloud with values on a random subset."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, n_max + 1))
    dim = int(rng.integers(1, dim_max + 1))
    c_size = int(rng.integers(2, min(c_max, n) + 1))
    coords = rng.uniform(0.0, 1.0, (n, dim))
    subset = rng.choice(n, size=c_size, replace=False)
    kind = seed % 3
    if kind == 0:
        values = coords[subset, 0] * rng.uniform(0.5, 3.0)
    elif kind == 1:
        values = np.sin(4.0 * coords[subset, 0]) + coords[subset, -1] ** 2
    else:
        values = rng.normal(0.0, 1.0, c_size)
    return instance_from_arrays(coords=coords, subset=subset, values=values)


def random_masses(instance, seed):
    rng = np.random.default_rng(seed + 10_000)
    masses = np.zeros(instance.n)
    masses[instance.subset] = rng.uniform(0.1, 2.0, len(instance.subset))
    return masses


# --- independent oracles -----------------------------------------------------


def oracle_lip(instance, values, members):
    """Brute-force double loop over distinct pairs."""
    members = list(members)
    best = 0.0
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            d = instance.distance(int(members[a]), int(members[b]))
            best = max(best, abs(values[a] - values[b]) / d)
    return best


def oracle_pen(profile, t):
    """Integral-style evaluation: sum slope * overlap over every band."""
    bp = profile.breakpoints
    val = profile.base_slope * min(t, bp[0])
    for i in range(len(bp) - 1):
        val += profile.slopes[i] * max(0.0, min(t, bp[i + 1]) - bp[i])
    if t > bp[-1]:
        val += profile.tail_slope * (t - bp[-1])
    return val


def oracle_extend(instance, profiles, y):
    """min over anchors of g(x) + pen_x(d(x, y)), via the integral oracle."""
    best = np.inf
    for pos, x in enumerate(instance.subset):
        t = instance.distance(int(x), int(y))
        best = min(best, instance.values[pos] + oracle_pen(profiles[pos], t))
    return best


def oracle_mcshane_upper(instance, l_prime, y):
    return min(instance.values[pos] + l_prime * instance.distance(int(x), int(y))
               for pos, x in enumerate(instance.subset))


def oracle_mcshane_lower(instance, l_prime, y):
    return max(instance.values[pos] - l_prime * instance.distance(int(x), int(y))
               for pos, x in enumerate(instance.subset))


@pytest.fixture
def line3():
    """Three collinear points 0, 0.5, 1 with data on the outer pair."""
    return instance_from_arrays(coords=[[0.0], [0.5], [1.0]],
                                subset=[0, 2], values=[0.0, 1.0])
