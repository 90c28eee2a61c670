import numpy as np
import pytest

from hypoflow.gradient import BoundedFunction
from hypoflow.models import ModelSpec


@pytest.fixture(scope="session")
def coord0():
    """Unbounded smooth helper f(z) = z[0] used by exact-value oracles."""
    def make(dim):
        grad = np.zeros(dim)
        grad[0] = 1.0
        return BoundedFunction("coord0", lambda z: float(z[0]), 1.0,
                               lambda z: grad.copy(), smooth=True)
    return make


@pytest.fixture(scope="session")
def ou_pair():
    """a1 = y, a2 = -y, b = 1: the linear pair with an exact Gaussian
    solution, used by the convergence-order oracle.  Plain-Python
    callbacks on purpose (exercises the fallback engine)."""
    return ModelSpec(
        m=1, n=1, d=1,
        a1=lambda x, y: np.array([y[0]]),
        a2=lambda x, y: np.array([-y[0]]),
        b=lambda x, y: np.array([[1.0]]),
        jac_a1=lambda x, y: np.array([[0.0, 1.0]]),
        jac_a2=lambda x, y: np.array([[0.0, -1.0]]),
        jac_b=lambda x, y: np.zeros((1, 1, 2)),
        hess_a1=lambda x, y: np.zeros((1, 2, 2)),
        name="ou_pair", linear_drift=True)
