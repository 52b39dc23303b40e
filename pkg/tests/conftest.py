import json
import os

import numpy as np
import pytest

ORACLE_PATH = os.path.join(os.path.dirname(__file__), "oracles", "oracles.json")


@pytest.fixture(scope="session")
def oracle():
    with open(ORACLE_PATH) as f:
        return json.load(f)


def within(est, target, se, k=4.0):
    """|est - target| <= k standard errors (with a tiny floor)."""
    return abs(est - target) <= k * se + 1e-12 * max(1.0, abs(target))


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))
