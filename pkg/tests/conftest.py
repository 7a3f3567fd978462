import numpy as np
import pytest

from mbgen.numerics import GradientTape, Tensor


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f(*arrays)`` with respect to each array."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            fp = f(*arrays)
            arr[idx] = old - h
            fm = f(*arrays)
            arr[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def analytic_grad(build, arrays):
    """Gradients of ``build(*tensors)`` (a scalar Tensor) via the tape."""
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with GradientTape() as tape:
        loss = build(*ts)
    tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def check_grad(build, arrays, h=1e-5):
    def f(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)
    num = numeric_grad(f, [a.copy() for a in arrays], h=h)
    ana = analytic_grad(build, arrays)
    return max(rel_err(n, a) for n, a in zip(num, ana))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
