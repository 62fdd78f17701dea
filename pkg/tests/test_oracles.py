import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from circuitopt.errors import ZeroNormal
from circuitopt.oracles import (INF, EuclideanDistance, FunctionClass, FunctionOracle, HalfspaceIndicator, Huber,
                                HuberDual, Quadratic, SeparableSum, Zero, agd_prox, halfspace_prox, moreau_grad,
                                prox)

vec = arrays(np.float64, 4, elements=st.floats(-50, 50))
rho_st = st.floats(0.05, 5.0)


def _library(seed=0, n=4):
    rng = np.random.default_rng(seed)
    Qt = rng.standard_normal((n, n))
    return [
        Zero(),
        Quadratic(Qt @ Qt.T, rng.standard_normal(n)),
        EuclideanDistance(rng.standard_normal(n)),
        EuclideanDistance(rng.standard_normal(n), squared=True),
        Huber(rng.standard_normal(n)),
    ]


def test_function_class_validation():
    assert FunctionClass().mu == 0 and FunctionClass().M == INF
    with pytest.raises(ValueError):
        FunctionClass(2.0, 1.0)
    with pytest.raises(ValueError):
        FunctionClass(-1.0, 1.0)


def test_distance_prox_closed_form():
    b = np.array([1.0, 2.0])
    f = EuclideanDistance(b)
    z = np.array([4.0, 6.0])  # distance 5
    np.testing.assert_allclose(f.prox(2.0, z), b + (z - b) * 3 / 5)
    np.testing.assert_allclose(f.prox(10.0, z), b)


def test_zero_prox_is_identity():
    z = np.array([1.0, -2.0])
    np.testing.assert_array_equal(Zero().prox(3.0, z), z)
    np.testing.assert_array_equal(moreau_grad(Zero(), 1.0, z), 0.0)


def test_quadratic_prox_against_brute_force(rng):
    Qt = rng.standard_normal((3, 3))
    f = Quadratic(Qt @ Qt.T)
    z = rng.standard_normal(3)
    u = agd_prox(f.grad, f.fclass.M, f.fclass.mu, 0.7, z, tol=1e-14)
    np.testing.assert_allclose(f.prox(0.7, z), u, atol=1e-10)
    np.testing.assert_allclose(f.prox(0.7, z), np.linalg.solve(np.eye(3) + 0.7 * f.Q, z))


def test_scalar_moreau_envelope():
    # f(u) = u^2/2, R = 1: prox = z/2 and the envelope z^2/4 has derivative z/2
    f = Quadratic([[1.0]])
    for z in (-3.0, 0.5, 2.0):
        assert moreau_grad(f, 1.0, np.array([z]))[0] == pytest.approx(z / 2)


def test_halfspace_examples():
    np.testing.assert_allclose(halfspace_prox([1.0, 0.0], 0.0, 1.0, [1.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(halfspace_prox([1.0, 1.0], 5.0, 1.0, [1.0, 1.0]), [1.0, 1.0])
    with pytest.raises(ZeroNormal):
        halfspace_prox([0.0, 0.0], 1.0, 1.0, [1.0, 0.0])
    with pytest.raises(ZeroNormal):
        HalfspaceIndicator([0.0, 0.0], 1.0)


def test_prox_rejects_nonpositive_parameter():
    with pytest.raises(ValueError):
        prox(Zero(), 0.0, np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(vec, rho_st)
def test_moreau_identity(z, R):
    for f in _library():
        p = f.prox(R, z)
        np.testing.assert_allclose(p + R * moreau_grad(f, R, z), z, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(vec, vec, rho_st)
def test_prox_optimality_and_firm_nonexpansiveness(z1, z2, R):
    for f in _library():
        p1, p2 = f.prox(R, z1), f.prox(R, z2)
        # (z - p)/R is a subgradient at p: check the subgradient inequality at sampled points
        g = (z1 - p1) / R
        for w in (z2, p2, np.zeros(4)):
            assert f.value(w) >= f.value(p1) + g @ (w - p1) - 1e-7 * (1 + abs(f.value(w)))
        assert (p1 - p2) @ (z1 - z2) >= np.sum((p1 - p2) ** 2) - 1e-8 * (1 + np.sum((z1 - z2) ** 2))
        lip = np.linalg.norm(moreau_grad(f, R, z1) - moreau_grad(f, R, z2))
        assert lip <= np.linalg.norm(z1 - z2) / R + 1e-8


@settings(max_examples=40, deadline=None)
@given(vec, rho_st)
def test_strongly_convex_prox_contracts_toward_minimizer(z, R):
    rng = np.random.default_rng(1)
    Qt = rng.standard_normal((4, 4))
    f = Quadratic(Qt @ Qt.T + np.eye(4), rng.standard_normal(4))
    xs = f.minimizer()
    mu = f.fclass.mu
    assert np.linalg.norm(f.prox(R, z) - xs) <= np.linalg.norm(z - xs) / (1 + R * mu) + 1e-9


@settings(max_examples=40, deadline=None)
@given(vec, vec)
def test_monotone_subgradients(x1, x2):
    for f in _library():
        g1, g2 = f.subgrad(x1), f.subgrad(x2)
        assert (x1 - x2) @ (g1 - g2) >= f.fclass.mu * np.sum((x1 - x2) ** 2) - 1e-8 * (1 + np.sum((x1 - x2) ** 2))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-5, 5)))
def test_finite_difference_gradients(x):
    lib = _library()
    for f in lib[1:]:
        if isinstance(f, EuclideanDistance) and np.linalg.norm(x - f.b) < 1e-2:
            continue
        if isinstance(f, Huber) and np.any(np.abs(np.abs(x - f.c) - 1) < 1e-3):
            continue  # kink of the second derivative, first derivative is fine but fd is noisier
        g = f.subgrad(x)
        fd = np.array([(f.value(x + 1e-5 * e) - f.value(x - 1e-5 * e)) / 2e-5 for e in np.eye(4)])
        assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_halfspace_projection_kkt(rng):
    for _ in range(100):
        a, z = rng.standard_normal(5), rng.standard_normal(5) * 3
        b = float(rng.standard_normal())
        u = halfspace_prox(a, b, 1.0, z)
        lam = (z - u) @ a / (a @ a)
        assert a @ u <= b + 1e-12
        assert lam >= -1e-12
        np.testing.assert_allclose(z - u, lam * a, atol=1e-12)
        assert lam * (a @ u - b) == pytest.approx(0.0, abs=1e-10)


def test_halfspace_indicator_values():
    f = HalfspaceIndicator([1.0, 0.0], 1.0)
    assert f.value(np.array([0.5, 9.0])) == 0.0
    assert f.value(np.array([2.0, 0.0])) == INF


def test_separable_sum_blocks(rng):
    parts = _library()[1:4]
    f = SeparableSum(parts, dim=4)
    z = rng.standard_normal(12)
    expected = np.concatenate([p.prox(0.3, z[4 * k:4 * k + 4]) for k, p in enumerate(parts)])
    np.testing.assert_allclose(f.prox(0.3, z), expected)
    assert f.value(z) == pytest.approx(sum(p.value(z[4 * k:4 * k + 4]) for k, p in enumerate(parts)))


def test_huber_dual_prox_and_gradient(rng):
    A = rng.standard_normal((3, 8))
    f = HuberDual(A, rng.standard_normal(3), rng.standard_normal(8))
    z = rng.standard_normal(3)
    p = f.prox(0.5, z)
    np.testing.assert_allclose((z - p) / 0.5, f.subgrad(p), atol=1e-8)
    lmin = np.linalg.eigvalsh(A @ A.T)[0]
    assert f.fclass.mu == pytest.approx(lmin / 2)


def test_generic_oracle_uses_accelerated_prox():
    class Soft(FunctionOracle):
        smooth = True
        fclass = FunctionClass(0.0, 1.0)

        def value(self, x):
            return float(np.sum(np.logaddexp(0, x)))

        def subgrad(self, x):
            return 1 / (1 + np.exp(-x))

    f = Soft()
    z = np.array([2.0, -1.0, 0.3])
    p = f.prox(0.8, z)
    np.testing.assert_allclose(p + 0.8 * f.grad(p), z, atol=1e-10)
