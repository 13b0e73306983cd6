"""Shared fixtures and sample builders."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pelsd.data import PairedSample

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_sample(
    rng: np.random.Generator,
    k: int = 400,
    d00: float = 0.2,
    d10: float = 0.1,
    support=(0.0, 1.0),
    groups: int = 10,
    shift_b: float = 0.0,
    weights: np.ndarray | None = None,
) -> PairedSample:
    """Random paired sample on ``support`` with MCAR nonresponse and random-group replicates."""
    lo, hi = support
    ya = lo + (hi - lo) * rng.beta(2.0, 3.0, size=k)
    yb = np.clip(ya + shift_b * (hi - lo) + 0.05 * (hi - lo) * rng.standard_normal(k), lo, hi)
    u = rng.uniform(size=k)
    za = (u >= d00).astype(int)
    zb = (u >= d00 + d10).astype(int)
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=float)
    grp = rng.permutation(k) % groups
    rw = np.repeat(w[:, None], groups, axis=1) * groups / (groups - 1)
    rw[np.arange(k), grp] = 0.0
    return PairedSample(
        y_a=np.where(za == 1, ya, np.nan),
        y_b=np.where(zb == 1, yb, np.nan),
        z_a=za,
        z_b=zb,
        weight=w,
        support_a=support,
        support_b=support,
        replicate_weights=rw,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def sample(rng):
    return make_sample(rng)
