import numpy as np
import pytest

from podcount import AdamState, Tensor, adam_step


def make(shapes, seed=0, lr=2e-4, wd=0.0, eps=1e-8):
    rng = np.random.default_rng(seed)
    params = {f"p{i}": Tensor(rng.standard_normal(s), requires_grad=True)
              for i, s in enumerate(shapes)}
    state = AdamState.init(params, lr=lr, weight_decay=wd, eps=eps)
    return params, state


def test_zero_grad_zero_decay_is_noop():
    params, state = make([(3,), (2, 2)])
    before = {k: p.data.copy() for k, p in params.items()}
    grads = {k: np.zeros_like(p.data) for k, p in params.items()}
    adam_step(params, grads, state)
    for k in params:
        np.testing.assert_array_equal(params[k].data, before[k])
    assert state.step == 1


def test_first_step_moves_by_lr_per_element():
    # bias correction makes m_hat / sqrt(v_hat) = sign(g) on step one
    params, state = make([(5,)], lr=1e-3, eps=1e-15)
    before = params["p0"].data.copy()
    g = np.array([1.0, -2.0, 0.5, -0.1, 3.0])
    adam_step(params, {"p0": g}, state)
    delta = params["p0"].data - before
    np.testing.assert_allclose(delta, -1e-3 * np.sign(g), rtol=1e-9)


def test_quadratic_descent():
    # f(x) = x^2 / 2, gradient x: |x| must shrink over two steps from 1
    params, state = make([(1,)], lr=0.05)
    params["p0"].data[:] = 1.0
    trail = [1.0]
    for _ in range(2):
        g = params["p0"].data.copy()
        adam_step(params, {"p0": g}, state)
        trail.append(abs(float(params["p0"].data[0])))
    assert trail[1] < trail[0]
    assert trail[2] < trail[1]


def test_decoupled_weight_decay_without_grads():
    params, state = make([(4,)], lr=0.1, wd=0.01)
    before = params["p0"].data.copy()
    adam_step(params, {"p0": np.zeros(4)}, state)
    np.testing.assert_allclose(params["p0"].data, before * (1.0 - 0.1 * 0.01), rtol=1e-12)


def test_deterministic_given_same_inputs():
    outs = []
    for _ in range(2):
        params, state = make([(6,)], seed=7, lr=3e-3)
        g = np.random.default_rng(9).standard_normal(6)
        for _ in range(5):
            adam_step(params, {"p0": g}, state)
        outs.append(params["p0"].data.copy())
    np.testing.assert_array_equal(outs[0], outs[1])


def test_matches_reference_adam_sequence():
    # independent scalar recomputation of the update rule
    lr, b1, b2, eps, wd = 1e-2, 0.9, 0.999, 1e-8, 0.0
    params, state = make([(1,)], lr=lr, wd=wd, eps=eps)
    x = float(params["p0"].data[0])
    m = v = 0.0
    rng = np.random.default_rng(3)
    for t in range(1, 8):
        g = float(rng.standard_normal())
        adam_step(params, {"p0": np.array([g])}, state)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
        assert float(params["p0"].data[0]) == pytest.approx(x, rel=1e-12)


def test_shape_mismatch_rejected():
    params, state = make([(3,)])
    with pytest.raises(ValueError, match="shape"):
        adam_step(params, {"p0": np.zeros(4)}, state)


def test_invalid_lr_rejected():
    with pytest.raises(ValueError, match="lr"):
        AdamState(lr=0.0)
