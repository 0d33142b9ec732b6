import numpy as np
import pytest

from rdmperch.description import bundled_robot
from rdmperch.model import GeneralizedState


@pytest.fixture(scope="session")
def quad():
    return bundled_robot("rdm-quad")


def random_state(model, rng, attitude_scale=0.3):
    """Random valid state: q uniform inside limits, modest attitude."""
    lo, hi = model.q_limits()
    margin = 0.05 * (hi - lo)
    q = rng.uniform(lo + margin, hi - margin)
    eta = rng.uniform(-attitude_scale, attitude_scale, 3)
    p = rng.uniform(-1.0, 1.0, 3)
    return GeneralizedState(p=p, eta=eta, q=q)
