from __future__ import annotations

import numpy as np
import pytest

from doekit.feeder import Feeder, LineSegment, packaged_feeder


@pytest.fixture(scope="session")
def feeder3():
    return packaged_feeder("feeder3")


@pytest.fixture(scope="session")
def feeder3_100():
    return packaged_feeder("feeder3_100kva")


@pytest.fixture(scope="session")
def belgian8():
    return packaged_feeder("belgian8")


def chain(r, x=None, p=None, q=None, rating=20e3, **kw) -> Feeder:
    """Chain feeder 0-1-...-N from per-line impedances and per-node loads."""
    r = np.asarray(r, dtype=float)
    n = len(r)
    x = 0.5 * r if x is None else np.asarray(x, dtype=float)
    p = np.zeros(n) if p is None else p
    q = np.zeros(n) if q is None else q
    lines = [LineSegment(i, i + 1, float(r[i]), float(x[i])) for i in range(n)]
    return Feeder(lines=lines, base_load_p=p, base_load_q=q, transformer_rating=rating, **kw)


def random_tree(rng: np.random.Generator, n: int, rating_factor: float = 1.3, **kw) -> Feeder:
    """Small random tree with moderate impedances; node k attaches to any earlier node."""
    parents = [0] + [int(rng.integers(1, k + 1)) for k in range(1, n)]
    r = rng.uniform(0.002, 0.02, n)
    x = r * rng.uniform(0.2, 1.0, n)
    p = rng.uniform(0.0, 5e3, n)
    q = p * rng.uniform(0.0, 0.4, n)
    rating = rating_factor * max(np.hypot(p.sum(), q.sum()), 1e3)
    lines = [LineSegment(parents[i], i + 1, float(r[i]), float(x[i])) for i in range(n)]
    return Feeder(lines=lines, base_load_p=p, base_load_q=q, transformer_rating=rating, **kw)
