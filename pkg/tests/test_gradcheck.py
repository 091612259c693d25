import numpy as np
import pytest

from podcount import GradientCheckError, Tensor, gradient_check
from podcount import tensor as T


def test_sum_of_squares():
    params = {"x": Tensor(np.array([1.0, 2.0]), requires_grad=True)}

    def f(p):
        return (p["x"] * p["x"]).sum()

    f(params).backward()
    np.testing.assert_allclose(params["x"].grad, [2.0, 4.0])
    err = gradient_check(f, params, eps=1e-5)
    assert err < 1e-6


def test_linear_function_is_nearly_exact():
    # central differences are exact for linear maps up to rounding
    w = np.array([0.3, -1.2, 2.5])
    params = {"x": Tensor(np.array([0.1, 0.2, 0.3]), requires_grad=True)}
    err = gradient_check(lambda p: (p["x"] * Tensor(w)).sum(), params, eps=1e-5)
    assert err < 1e-10


def test_detects_wrong_gradient():
    params = {"x": Tensor(np.array([1.0, 2.0]), requires_grad=True)}

    def bad(p):
        # gradient flows only through the first factor; analytic grad is
        # then x instead of 2x
        return (p["x"] * p["x"].detach()).sum()

    err = gradient_check(bad, params, eps=1e-5)
    assert err > 1e-2


def test_non_finite_objective_reported():
    params = {"x": Tensor(np.array([0.0]), requires_grad=True)}
    with pytest.raises(GradientCheckError):
        gradient_check(lambda p: T.log(p["x"] + 0.0), params, eps=1.0)


def test_tol_argument_raises_on_failure():
    params = {"x": Tensor(np.array([1.0, 2.0]), requires_grad=True)}

    def bad(p):
        return (p["x"] * p["x"].detach()).sum()

    with pytest.raises(GradientCheckError, match="exceeds"):
        gradient_check(bad, params, eps=1e-5, tol=1e-5)


def test_subsampling_is_deterministic():
    rng = np.random.default_rng(0)
    params = {"x": Tensor(rng.standard_normal(50), requires_grad=True)}

    def f(p):
        return (p["x"] ** 3.0).sum()

    e1 = gradient_check(f, params, max_elements_per_param=10,
                        rng=np.random.default_rng(5))
    e2 = gradient_check(f, params, max_elements_per_param=10,
                        rng=np.random.default_rng(5))
    assert e1 == e2 and e1 < 1e-6
