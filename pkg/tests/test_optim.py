import numpy as np
import pytest

from orderlab.optim import OPTIMIZER_KINDS, make_optimizer, step
from orderlab.tensor import GradientVector
from orderlab.rng import stream_gen
from orderlab.errors import LayoutError, NumericError


def _grad(values, layout="t"):
    return GradientVector(np.asarray(values, dtype=np.float64), layout)


def test_sgd_step_is_exact():
    opt = make_optimizer({"kind": "sgd", "lr": 0.1}, "t", 3)
    p = np.array([1.0, -2.0, 0.5])
    g = np.array([0.3, 0.0, -1.0])
    out = step(opt, p, _grad(g))
    assert np.array_equal(out, p - 0.1 * g)


def test_sgd_decay_on_quadratic():
    # f = 0.5 theta^2, grad = theta: theta_k should contract by (1 - lr)
    opt = make_optimizer({"kind": "sgd", "lr": 0.1}, "t", 1)
    p = np.array([4.0])
    for _ in range(100):
        p = step(opt, p, _grad(p))
    assert np.isclose(p[0], 4.0 * 0.9**100, rtol=1e-12)


def test_momentum_zero_mu_is_sgd_bitwise():
    gen = stream_gen(0, "steps")
    sgd = make_optimizer({"kind": "sgd", "lr": 0.05}, "t", 8)
    mom = make_optimizer({"kind": "momentum", "lr": 0.05, "momentum": 0.0}, "t", 8)
    p_sgd = gen.normal(size=8)
    p_mom = p_sgd.copy()
    for _ in range(50):
        g = _grad(gen.normal(size=8))
        p_sgd = step(sgd, p_sgd, g)
        p_mom = step(mom, p_mom, g)
        assert np.array_equal(p_sgd, p_mom)


def test_momentum_two_steps_by_hand():
    lr, mu = 0.1, 0.9
    opt = make_optimizer({"kind": "momentum", "lr": lr, "momentum": mu}, "t", 2)
    p0 = np.array([1.0, 2.0])
    g1 = np.array([0.5, -0.5])
    g2 = np.array([0.25, 0.25])
    v1 = -lr * g1
    p1 = step(opt, p0, _grad(g1))
    assert np.array_equal(p1, p0 + v1)
    v2 = mu * v1 - lr * g2
    p2 = step(opt, p1, _grad(g2))
    assert np.array_equal(p2, p1 + v2)


def test_adam_first_step_closed_form():
    # after bias correction the first Adam step is lr * g / (|g| + eps)
    lr, eps = 0.01, 1e-8
    opt = make_optimizer({"kind": "adam", "lr": lr, "eps": eps}, "t", 3)
    p0 = np.zeros(3)
    g = np.array([2.0, -0.3, 1e-6])
    p1 = step(opt, p0, _grad(g))
    want = p0 - lr * g / (np.abs(g) + eps)
    assert np.allclose(p1, want, rtol=1e-12, atol=0)


def test_adam_second_step_by_hand():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    opt = make_optimizer({"kind": "adam", "lr": lr}, "t", 2)
    p = np.array([1.0, -1.0])
    g1 = np.array([0.5, 0.2])
    g2 = np.array([-0.1, 0.4])
    m = v = np.zeros(2)
    for t, g in enumerate((g1, g2), start=1):
        p_lib = step(opt, p, _grad(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        p = p - lr * mh / (np.sqrt(vh) + eps)
        assert np.allclose(p_lib, p, rtol=1e-12, atol=0)
        p = p_lib


def test_step_count_and_state():
    opt = make_optimizer({"kind": "adam", "lr": 0.01}, "t", 2)
    assert opt.step_count == 0
    step(opt, np.zeros(2), _grad([1.0, 1.0]))
    assert opt.step_count == 1
    step(opt, np.zeros(2), _grad([1.0, 1.0]))
    assert opt.step_count == 2


def test_layout_and_type_guards():
    opt = make_optimizer({"kind": "sgd", "lr": 0.1}, "layout-a", 3)
    with pytest.raises(LayoutError):
        step(opt, np.zeros(3), _grad(np.zeros(3), layout="layout-b"))
    with pytest.raises(LayoutError):
        step(opt, np.zeros(3), _grad(np.zeros(4), layout="layout-a"))
    with pytest.raises(TypeError):
        step(opt, np.zeros(3), np.zeros(3))


def test_overflow_becomes_numeric_error():
    opt = make_optimizer({"kind": "sgd", "lr": 1.0}, "t", 1)
    with pytest.raises(NumericError):
        step(opt, np.array([1e308]), _grad([-1e308]))


def test_make_optimizer_validation():
    assert set(OPTIMIZER_KINDS) == {"sgd", "momentum", "adam"}
    with pytest.raises(ValueError):
        make_optimizer({"kind": "lbfgs", "lr": 0.1}, "t", 2)
    with pytest.raises(ValueError):
        make_optimizer({"kind": "sgd", "lr": -0.1}, "t", 2)


def test_repeated_runs_are_identical():
    def run():
        gen = stream_gen(4, "replay")
        opt = make_optimizer({"kind": "momentum", "lr": 0.03, "momentum": 0.9}, "t", 5)
        p = np.ones(5)
        for _ in range(20):
            p = step(opt, p, _grad(gen.normal(size=5)))
        return p

    assert np.array_equal(run(), run())
