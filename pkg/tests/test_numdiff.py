"""Reverse-mode engine: primitives, tape, special functions, Adam and gradient checking."""
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventsimplex import numdiff as nd
from eventsimplex.numdiff import Tensor


class TestForwardValues:
    def test_digamma_at_one_is_minus_euler_gamma(self):
        # [DERIVED] mpmath.digamma(1) = -0.5772156649015329
        assert nd.digamma(Tensor(1.0)).item() == pytest.approx(-0.5772156649015329, abs=1e-12)

    def test_logsumexp_of_zeros(self):
        assert nd.logsumexp(Tensor([0.0, 0.0])).item() == pytest.approx(math.log(2), abs=1e-15)

    def test_sigmoid_at_zero(self):
        assert nd.sigmoid(Tensor(0.0)).item() == 0.5

    @pytest.mark.parametrize("x", [1e-3, 0.1, 0.5, 1.0, 2.5, 5.99, 6.0, 17.3, 1e3, 1e6])
    def test_digamma_matches_mpmath(self, x):
        assert nd.digamma_np(x) == pytest.approx(float(mpmath.digamma(x)), rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("x", [1e-3, 0.3, 1.0, 2.0, 7.5, 100.0])
    def test_trigamma_matches_mpmath(self, x):
        assert nd.trigamma_np(x) == pytest.approx(float(mpmath.psi(1, x)), rel=1e-12)

    def test_digamma_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            nd.digamma_np(np.array([1.0, 0.0]))

    def test_softplus_is_stable_for_large_inputs(self):
        out = nd.softplus(Tensor([-1000.0, 0.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.0, math.log(2), 1000.0], atol=1e-12)

    def test_spd_solve_matches_numpy(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4))
        K = a @ a.T + 4 * np.eye(4)
        B = rng.normal(size=(4, 3))
        np.testing.assert_allclose(nd.spd_solve(Tensor(K), Tensor(B)).data, np.linalg.solve(K, B), atol=1e-12)

    def test_shape_error_names_the_primitive(self):
        with pytest.raises(ValueError, match="matmul"):
            nd.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ValueError, match="add"):
            Tensor(np.ones(3)) + Tensor(np.ones(4))


class TestBackward:
    def test_product_rule(self):
        x, y = Tensor(2.0, True), Tensor(3.0, True)
        g = nd.backward(x * y)
        assert g[x] == 3.0 and g[y] == 2.0

    def test_digamma_gradient_is_trigamma(self):
        x = Tensor(2.0, True)
        # [DERIVED] trigamma(2) = pi^2/6 - 1
        assert nd.backward(nd.digamma(x))[x] == pytest.approx(math.pi ** 2 / 6 - 1, abs=1e-12)

    def test_constant_root_gives_empty_map(self):
        assert nd.backward(Tensor(5.0) * 2.0) == {}

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ValueError):
            nd.backward(Tensor(np.ones(3), True) * 2.0)

    def test_params_without_path_get_zero_gradient(self):
        x, unused = Tensor(1.0, True), Tensor(np.ones(2), True)
        g = nd.backward(x * 4.0, [x, unused])
        assert g[x] == 4.0
        np.testing.assert_array_equal(g[unused], np.zeros(2))

    def test_shared_subexpression_accumulates(self):
        x = Tensor(3.0, True)
        y = x * x
        assert nd.backward(y + y)[x] == 12.0

    def test_deep_chain_does_not_recurse(self):
        x = Tensor(1.0, True)
        y = x
        for _ in range(5000):
            y = y * 1.0
        assert nd.backward(y)[x] == 1.0

    def test_tape_is_topological(self):
        x = Tensor(1.0, True)
        y = nd.exp(x) * x
        tape = nd.ComputationTape(y)
        pos = {id(n): i for i, n in enumerate(tape.nodes)}
        for n in tape.nodes:
            for p in n._parents:
                assert pos[id(p)] < pos[id(n)]

    def test_no_grad_skips_recording(self):
        x = Tensor(1.0, True)
        with nd.no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_debug_mode_raises_on_nan(self):
        with nd.debug_mode(), np.errstate(invalid="ignore"):
            with pytest.raises(FloatingPointError):
                nd.log(Tensor(-1.0, True))

    def test_min_ties_route_gradient_to_first_argument(self):
        a, b = Tensor(0.5, True), Tensor(0.5, True)
        g = nd.backward(nd.minimum(a, b), [a, b])
        assert g[a] == 1.0 and g[b] == 0.0

    def test_identical_runs_are_bitwise_equal(self):
        def run():
            rng = np.random.default_rng(3)
            w = Tensor(rng.normal(size=(5, 4)), True)
            loss = nd.logsumexp(nd.tanh(nd.matmul(rng.normal(size=(3, 5)), w)), axis=-1).sum()
            return loss.item(), nd.backward(loss)[w]
        (l1, g1), (l2, g2) = run(), run()
        assert l1 == l2 and np.array_equal(g1, g2)


UNARY = {
    "exp": nd.exp, "log": lambda a: nd.log(nd.absolute(a) + 0.5), "sigmoid": nd.sigmoid, "tanh": nd.tanh,
    "softplus": nd.softplus, "digamma": lambda a: nd.digamma(nd.absolute(a) + 0.3), "erf": nd.erf,
    "normal_pdf": nd.normal_pdf, "normal_cdf": nd.normal_cdf, "sqrt": lambda a: nd.sqrt(nd.square(a) + 1.0),
    "power": lambda a: nd.power(nd.absolute(a) + 1.0, 1.7), "log_softmax": nd.log_softmax,
    "softmax": nd.softmax, "logsumexp": lambda a: nd.logsumexp(a, axis=0), "clamp": lambda a: nd.clamp(a, -0.5, 0.7),
    "transpose": lambda a: nd.transpose(nd.reshape(a, (2, 3))) * np.arange(6.0).reshape(3, 2),
    "getitem": lambda a: a[[0, 0, 4]] * np.array([1.0, 2.0, 3.0]),
    "broadcast": lambda a: nd.broadcast_to(nd.expand_dims(a, 0), (2, 6)) * np.arange(12.0).reshape(2, 6),
    "mean": lambda a: nd.mean(nd.reshape(a, (3, 2)), axis=0) * np.array([1.0, -2.0]),
}


class TestGradCheck:
    def test_polynomial(self):
        assert nd.grad_check(lambda x: nd.square(x).sum(), np.array([3.0])) < 1e-6

    @pytest.mark.parametrize("name", sorted(UNARY))
    def test_unary_primitives(self, name):
        rng = np.random.default_rng(1)
        fn = UNARY[name]
        x = rng.normal(size=6) + 0.05

        def f(a):
            out = fn(a)
            return (out * np.linspace(0.3, 1.1, out.size).reshape(out.shape)).sum()
        assert nd.grad_check(f, x) < 1e-6

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "matmul", "minimum", "maximum", "where",
                                    "concat", "stack", "spd_solve"])
    def test_binary_primitives(self, op):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3)) + 3.0
        weights = rng.normal(size=(3, 3))
        stacked = {"concat": rng.normal(size=(6, 3)), "stack": rng.normal(size=(2, 3, 3))}

        def f(x, y):
            if op == "spd_solve":
                K = nd.matmul(x, nd.transpose(x)) + 3.0 * np.eye(3)
                return (nd.spd_solve(K, y) * weights).sum()
            if op in ("concat", "stack"):
                return (getattr(nd, op)([x, y], axis=0) * stacked[op]).sum()
            if op == "where":
                return (nd.where(weights > 0, x, y) * weights).sum()
            out = getattr(nd, op)(x, y)
            return (out * weights).sum()
        assert nd.grad_check(f, [a, b]) < 1e-6

    def test_broadcasting_gradients_reduce_to_operand_shape(self):
        x, b = Tensor(np.ones((4, 3)), True), Tensor(np.ones(3), True)
        g = nd.backward(((x * b) + b).sum())
        assert g[b].shape == (3,)
        np.testing.assert_allclose(g[b], [8.0, 8.0, 8.0])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.05, 30.0), min_size=2, max_size=5))
    def test_dirichlet_uce_gradient(self, alpha):
        def f(a):
            return nd.digamma(a.sum()) - nd.digamma(a[0])
        assert nd.grad_check(f, np.array(alpha), step=1e-5) < 1e-4


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        p = Tensor(np.array([1.0, -2.0]), True)
        state = nd.AdamState.for_params([p])
        nd.adam_step(state, [p], [np.zeros(2)])
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        # [DERIVED] with fresh moments m_hat = g and v_hat = g^2, so delta = -lr * g / (|g| + eps)
        p = Tensor(np.array([1.0, 1.0, 1.0]), True)
        g = np.array([0.3, -2.0, 1e-3])
        state = nd.AdamState.for_params([p], lr=0.01)
        nd.adam_step(state, [p], [g])
        np.testing.assert_allclose(p.data, 1.0 - 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_l2_enters_the_gradient(self):
        p = Tensor(np.array([2.0]), True)
        state = nd.AdamState.for_params([p], lr=0.1, l2=1.0)
        nd.adam_step(state, [p], [np.zeros(1)])
        assert p.data[0] == pytest.approx(2.0 - 0.1, abs=1e-7)

    def test_non_finite_gradient_names_parameter(self):
        p = Tensor(np.ones(2), True, "head.W")
        with pytest.raises(FloatingPointError, match="head.W"):
            nd.adam_step(nd.AdamState.for_params([p]), [p], [np.array([1.0, np.nan])])

    def test_minimises_a_quadratic(self):
        p = Tensor(np.array([5.0, -3.0]), True)
        state = nd.AdamState.for_params([p], lr=0.1)
        for _ in range(500):
            loss = nd.square(p - np.array([1.0, 2.0])).sum()
            nd.adam_step(state, [p], nd.backward(loss, [p]))
        np.testing.assert_allclose(p.data, [1.0, 2.0], atol=1e-3)
