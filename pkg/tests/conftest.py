"""Shared fixtures. Builder helpers live in :mod:`helpers`."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import make_ctx


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_ctx():
    return make_ctx(n=6, n_genes=3, n_probes=5, seed=7)
