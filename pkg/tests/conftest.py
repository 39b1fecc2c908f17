import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semrec.corpus import InteractionLog
from semrec.encoding import EmbeddingTable

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def tiny_log():
    return InteractionLog.from_records([
        ("u1", "a", 1, "train"),
        ("u1", "b", 2, "train"),
        ("u1", "c", 3, "validation"),
        ("u2", "b", 1, "train"),
        ("u2", "d", 2, "validation"),
        ("u3", "e", 5, "train"),
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_table(rng, n, d, prefix="i"):
    return EmbeddingTable([f"{prefix}{k:04d}" for k in range(n)], rng.standard_normal((n, d)))
