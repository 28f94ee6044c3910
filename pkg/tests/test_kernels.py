import numpy as np
import pytest

from edgeoco._kernels import al_eval, backend_name, numpy_backend, penalty_eval
from edgeoco._kernels.numpy_backend import (
    al_hessian,
    constraints_batch,
    cost_batch,
    jac_batch,
    penalty_hessian,
    stack_envs,
)
from edgeoco.environment import EnvConfig, env_sequence
from edgeoco.model import (
    ActionSpace,
    CostParams,
    clip,
    clipped_jacobian,
    constraint_jacobian,
    constraints,
    total_cost,
    total_cost_gradient,
)
from edgeoco.topology import build_topology

try:
    from edgeoco._kernels import _speedups
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

TOP = build_topology(2, 2, 2)
SPACE = ActionSpace(TOP)
PARAMS = CostParams.from_space(SPACE)
DIMS = (TOP.D, TOP.B, TOP.S)
PTUP = (PARAMS.bandwidth, PARAMS.cap_device, PARAMS.cap_server,
        PARAMS.delta_device, PARAMS.delta_server, PARAMS.delta_queue)


def reference_penalty(x, envs, rho):
    """Slot-by-slot evaluation through the per-node model, the ground truth."""
    cost = 0.0
    viol = 0.0
    maxv = 0.0
    grad = np.zeros_like(x)
    for env in envs:
        g = constraints(SPACE, PARAMS, x, env)
        h = clip(g)
        cost += total_cost(SPACE, PARAMS, x, env)
        viol += float(np.sum(h * h))
        maxv = max(maxv, float(np.max(h)))
        grad += total_cost_gradient(SPACE, PARAMS, x, env)
        rows = clipped_jacobian(SPACE, PARAMS, x, env, g)
        grad += rho * (2.0 * h[:, None] * rows).sum(axis=0)
    return cost, viol, grad, maxv


@pytest.mark.parametrize("t_batch", [1, 7])
@pytest.mark.parametrize("rho", [0.0, 10.0])
def test_numpy_kernel_matches_model_reference(t_batch, rho):
    rng = np.random.default_rng(20)
    envs = env_sequence(EnvConfig(seed=3), TOP, t_batch)
    stack = stack_envs(envs)
    for _ in range(10):
        x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
        c, v, g, m = numpy_backend.penalty_eval(x, DIMS, PTUP, stack, rho)
        rc, rv, rg, rm = reference_penalty(x, envs, rho)
        assert c == pytest.approx(rc, rel=1e-12)
        assert v == pytest.approx(rv, rel=1e-12, abs=1e-12)
        assert m == pytest.approx(rm, rel=1e-12, abs=1e-15)
        np.testing.assert_allclose(g, rg, rtol=1e-10, atol=1e-10)


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
@pytest.mark.parametrize("t_batch", [1, 13])
def test_compiled_kernel_matches_numpy(t_batch):
    rng = np.random.default_rng(21)
    envs = env_sequence(EnvConfig(seed=5), TOP, t_batch)
    stack = stack_envs(envs)
    for rho in (0.0, 3.0, 1e4):
        for _ in range(10):
            x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
            c1, v1, g1, m1 = numpy_backend.penalty_eval(x, DIMS, PTUP, stack, rho)
            c2, v2, g2, m2 = _speedups.penalty_eval_raw(
                x, *DIMS, *PTUP, stack.demand, stack.gain_dev, stack.gain_bs,
                stack.delay_bs, stack.delay_srv, stack.wired, rho)
            assert c2 == pytest.approx(c1, rel=1e-12)
            assert v2 == pytest.approx(v1, rel=1e-12, abs=1e-12)
            assert m2 == pytest.approx(m1, rel=1e-12, abs=1e-15)
            np.testing.assert_allclose(g2, g1, rtol=1e-9, atol=1e-9)


def test_batch_helpers_match_model():
    rng = np.random.default_rng(22)
    envs = env_sequence(EnvConfig(seed=7), TOP, 9)
    stack = stack_envs(envs)
    x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
    costs = cost_batch(x, DIMS, PTUP, stack)
    gs = constraints_batch(x, DIMS, PTUP, stack)
    assert costs.shape == (9,)
    assert gs.shape == (9, TOP.num_constraints)
    for t, env in enumerate(envs):
        assert costs[t] == pytest.approx(total_cost(SPACE, PARAMS, x, env), rel=1e-12)
        np.testing.assert_allclose(gs[t], constraints(SPACE, PARAMS, x, env),
                                   rtol=1e-12, atol=1e-12)


def test_active_backend_dispatch():
    envs = env_sequence(EnvConfig(seed=1), TOP, 2)
    stack = stack_envs(envs)
    x = 0.3 * SPACE.upper
    out = penalty_eval(x, DIMS, PTUP, stack, 5.0)
    ref = numpy_backend.penalty_eval(x, DIMS, PTUP, stack, 5.0)
    assert out[0] == pytest.approx(ref[0], rel=1e-12)
    np.testing.assert_allclose(out[2], ref[2], rtol=1e-9, atol=1e-9)
    assert backend_name() in ("cython", "numpy")


def reference_al(x, envs, rho, mu):
    """Augmented Lagrangian assembled slot by slot through the model."""
    cost = 0.0
    pen = 0.0
    maxv = 0.0
    grad = np.zeros_like(x)
    for t, env in enumerate(envs):
        g = constraints(SPACE, PARAMS, x, env)
        cost += total_cost(SPACE, PARAMS, x, env)
        maxv = max(maxv, float(np.max(g)), 0.0)
        s = np.maximum(0.0, mu[t] + rho * g)
        pen += float(np.sum(s * s - mu[t] ** 2)) / (2.0 * rho)
        grad += total_cost_gradient(SPACE, PARAMS, x, env)
        grad += s @ constraint_jacobian(SPACE, PARAMS, x, env)
    return cost, pen, grad, maxv


@pytest.mark.parametrize("t_batch", [1, 6])
def test_numpy_al_matches_model_reference(t_batch):
    rng = np.random.default_rng(30)
    envs = env_sequence(EnvConfig(seed=9), TOP, t_batch)
    stack = stack_envs(envs)
    for rho in (2.0, 1e3):
        for _ in range(6):
            x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
            mu = rng.uniform(0, 5, (t_batch, TOP.num_constraints))
            mu[rng.uniform(size=mu.shape) < 0.3] = 0.0
            c, p, g, m = numpy_backend.al_eval(x, DIMS, PTUP, stack, rho, mu)
            rc, rp, rg, rm = reference_al(x, envs, rho, mu)
            assert c == pytest.approx(rc, rel=1e-12)
            assert p == pytest.approx(rp, rel=1e-10, abs=1e-10)
            assert m == pytest.approx(rm, rel=1e-12, abs=1e-15)
            np.testing.assert_allclose(g, rg, rtol=1e-9, atol=1e-9)


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_compiled_al_matches_numpy():
    rng = np.random.default_rng(31)
    for t_batch in (1, 11):
        envs = env_sequence(EnvConfig(seed=13), TOP, t_batch)
        stack = stack_envs(envs)
        for rho in (7.0, 2e4):
            for _ in range(6):
                x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
                mu = rng.uniform(0, 40, (t_batch, TOP.num_constraints))
                out_np = numpy_backend.al_eval(x, DIMS, PTUP, stack, rho, mu)
                out_cy = _speedups.al_eval_raw(
                    x, *DIMS, *PTUP, stack.demand, stack.gain_dev,
                    stack.gain_bs, stack.delay_bs, stack.delay_srv,
                    stack.wired, rho, mu)
                assert out_cy[0] == pytest.approx(out_np[0], rel=1e-12)
                assert out_cy[1] == pytest.approx(out_np[1], rel=1e-10, abs=1e-10)
                assert out_cy[3] == pytest.approx(out_np[3], rel=1e-12, abs=1e-15)
                np.testing.assert_allclose(out_cy[2], out_np[2],
                                           rtol=1e-9, atol=1e-9)


def test_jacobian_batch_matches_model():
    rng = np.random.default_rng(32)
    envs = env_sequence(EnvConfig(seed=17), TOP, 5)
    stack = stack_envs(envs)
    for _ in range(4):
        x = rng.uniform(0, 1, SPACE.V) * SPACE.upper
        J = jac_batch(x, DIMS, PTUP, stack)
        assert J.shape == (5, TOP.num_constraints, SPACE.V)
        for t, env in enumerate(envs):
            np.testing.assert_allclose(
                J[t], constraint_jacobian(SPACE, PARAMS, x, env),
                rtol=1e-12, atol=1e-12)


def test_al_hessian_matches_finite_differences():
    rng = np.random.default_rng(33)
    envs = env_sequence(EnvConfig(seed=19), TOP, 3)
    stack = stack_envs(envs)
    rho = 10.0
    x = 0.2 * SPACE.upper + 0.6 * rng.uniform(0, 1, SPACE.V) * SPACE.upper
    mu = rng.uniform(0, 3, (3, TOP.num_constraints))
    H = al_hessian(x, DIMS, PTUP, stack, rho, mu)
    assert np.allclose(H, H.T)
    fd = np.zeros_like(H)
    for j in range(SPACE.V):
        h = 1e-6 * (1.0 + abs(x[j]))
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        gp = numpy_backend.al_eval(xp, DIMS, PTUP, stack, rho, mu)[2]
        gm = numpy_backend.al_eval(xm, DIMS, PTUP, stack, rho, mu)[2]
        fd[:, j] = (gp - gm) / (2.0 * h)
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-4)


def test_penalty_hessian_is_zero_multiplier_case():
    envs = env_sequence(EnvConfig(seed=23), TOP, 4)
    stack = stack_envs(envs)
    x = 0.4 * SPACE.upper
    mu0 = np.zeros((4, TOP.num_constraints))
    np.testing.assert_array_equal(
        penalty_hessian(x, DIMS, PTUP, stack, 50.0),
        al_hessian(x, DIMS, PTUP, stack, 100.0, mu0))
    # same relation for the fused evaluation
    c1, hsq, g1, m1 = numpy_backend.penalty_eval(x, DIMS, PTUP, stack, 50.0)
    c2, pen, g2, m2 = al_eval(x, DIMS, PTUP, stack, 100.0, mu0)
    assert c2 == pytest.approx(c1, rel=1e-12)
    assert pen == pytest.approx(50.0 * hsq, rel=1e-12, abs=1e-12)
    assert m2 == pytest.approx(m1, rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(g2, g1, rtol=1e-9, atol=1e-9)
