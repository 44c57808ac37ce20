import numpy as np
import pytest

from shiftlab import incremental as inc
from shiftlab.harness.gradcheck import REGISTRY, gradcheck
from shiftlab.numerics import RngStream, finite_diff_grad, relative_error


@pytest.mark.parametrize("op", sorted(REGISTRY))
def test_registered_ops_pass(op):
    rep = gradcheck(op, trials=20, tolerance=1e-6, seed=3)
    assert rep.passed, (op, rep.max_error)
    assert len(rep.errors) == 20


def _corrupted(rng: RngStream) -> float:
    z = rng.normal(size=(4, 5))
    y = np.array([0, 3, 4, 0])
    bad = inc.mib_ce(z, y, 2).grad * 1.01
    return relative_error(bad, finite_diff_grad(lambda v: inc.mib_ce(v, y, 2).loss, z))


def test_corrupted_gradient_fails():
    rep = gradcheck("broken", trials=5, registry={"broken": _corrupted})
    assert not rep.passed and rep.max_error > 1e-3


def test_unknown_op():
    with pytest.raises(KeyError):
        gradcheck("nope")


def test_deterministic():
    assert gradcheck("mib_kd", 5, seed=1).errors == gradcheck("mib_kd", 5, seed=1).errors
