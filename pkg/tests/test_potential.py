import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdmn.errors import ModelError
from hdmn.network import ConstraintRelation
from hdmn.potential import (
    HybridPotential,
    condition,
    divide,
    from_canonical,
    log_mass,
    marginalize,
    max_abs_diff,
    moments,
    multiply,
    normalize,
    to_canonical,
    total_log_mass,
)

LOG_2PI = np.log(2 * np.pi)


def test_uniform_times_constraint_zeroes_excluded_value():
    u = HybridPotential.from_table((0,), (2,), [0.5, 0.5])
    c = HybridPotential.from_constraint(ConstraintRelation((0,), {(1,)}), (2,))
    p = multiply(u, c)
    assert p.zero.tolist() == [True, False]
    assert np.exp(p.log_values()).tolist() == pytest.approx([0.0, 0.5])


def test_identity_is_neutral(rng):
    p = HybridPotential.from_table((3, 1), (2, 3), rng.random((2, 3)))
    assert max_abs_diff(multiply(p, HybridPotential.identity()), p) == 0.0
    q = HybridPotential.gaussian((5,), [1.0], [[2.0]])
    assert max_abs_diff(multiply(HybridPotential.identity(), q), q) == 0.0


def test_product_of_gaussians():
    p = multiply(HybridPotential.gaussian((0,), [0.0], [[1.0]]), HybridPotential.gaussian((0,), [1.0], [[1.0]]))
    lw, mean, cov = from_canonical(float(p.g), p.h, p.K)
    assert mean[0] == pytest.approx(0.5) and cov[0, 0] == pytest.approx(0.5)
    # the weight is the density of the difference: N(1; 0, 2)
    assert lw == pytest.approx(-0.5 * np.log(2 * np.pi * 2) - 0.25)


def test_integrating_a_density_gives_unit_mass():
    p = HybridPotential.gaussian((0,), [3.0], [[4.0]])
    m = marginalize(p, [0])
    assert m.cvars == () and float(m.g) == pytest.approx(0.0, abs=1e-12)


def test_mixture_collapse_moment_matches():
    w = HybridPotential.from_table((1,), (2,), [0.5, 0.5])
    comp = HybridPotential((1,), (2,), (0,), [-0.5 * LOG_2PI, -0.5 * LOG_2PI - 2.0],
                           [[0.0], [2.0]], [[[1.0]], [[1.0]]])
    p = marginalize(multiply(w, comp), [1])
    assert p.collapsed
    lw, mean, cov = from_canonical(float(p.g), p.h, p.K)
    assert lw == pytest.approx(0.0, abs=1e-12)
    assert mean[0] == pytest.approx(1.0) and cov[0, 0] == pytest.approx(2.0)


def test_condition_standard_normal_at_zero():
    p = condition(HybridPotential.gaussian((0,), [0.0], [[1.0]]), {0: 0.0})
    assert p.cvars == ()
    assert np.exp(float(p.g)) == pytest.approx(1 / np.sqrt(2 * np.pi))


def test_condition_regression_on_parent():
    # z | y ~ N(1 + 2y, 0.5); condition on y=1 leaves N(3, 0.5)
    from hdmn.network import LinearGaussianCPD
    p = HybridPotential.from_linear_gaussian(LinearGaussianCPD(2, (), (1,), 1.0, [2.0], 0.5), ())
    q = condition(p, {1: 1.0})
    lw, mean, cov = from_canonical(float(q.g), q.h, q.K)
    assert lw == pytest.approx(0.0, abs=1e-12)
    assert mean[0] == pytest.approx(3.0) and cov[0, 0] == pytest.approx(0.5)


def test_canonical_round_trip(rng):
    for _ in range(10):
        a = rng.normal(size=(3, 3))
        cov = a @ a.T + np.eye(3)
        mean = rng.normal(size=3)
        g, h, K = to_canonical(mean, cov, 0.7)
        lw, m2, c2 = from_canonical(g, h, K)
        assert lw == pytest.approx(0.7)
        np.testing.assert_allclose(m2, mean, atol=1e-10)
        np.testing.assert_allclose(c2, cov, atol=1e-10)


def test_divide_undoes_multiply(rng):
    a = HybridPotential.from_table((0, 1), (2, 3), rng.random((2, 3)) + 0.1)
    b = HybridPotential.from_table((1,), (3,), rng.random(3) + 0.1)
    assert max_abs_diff(divide(multiply(a, b), b), a) < 1e-12


def test_zero_divided_by_zero_is_zero():
    a = HybridPotential.from_table((0,), (2,), [0.0, 1.0])
    b = HybridPotential.from_table((0,), (2,), [0.0, 2.0])
    q = divide(a, b)
    assert q.zero.tolist() == [True, False]


def test_bad_scopes_rejected():
    with pytest.raises(ModelError):
        HybridPotential((0, 0), (2, 2), (), 0.0)
    with pytest.raises(ModelError):
        HybridPotential((0,), (2,), (0,), 0.0)
    with pytest.raises(ModelError):
        marginalize(HybridPotential.from_table((0,), (2,), [1, 1]), [7])


def test_reorder_preserves_values(rng):
    t = rng.random((2, 3, 4))
    p = HybridPotential.from_table((0, 1, 2), (2, 3, 4), t)
    q = p.reorder((2, 0, 1))
    np.testing.assert_allclose(np.exp(q.log_values()), np.transpose(t, (2, 0, 1)))


def test_moments_of_clg():
    p = HybridPotential((0,), (2,), (1,), [0.0, 0.0], [[0.0], [4.0]], [[[1.0]], [[2.0]]])
    _, mu, cov = moments(p)
    np.testing.assert_allclose(mu[:, 0], [0.0, 2.0])
    np.testing.assert_allclose(cov[:, 0, 0], [1.0, 0.5])


tables = st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6).map(lambda v: np.array(v).reshape(2, 3))


@settings(max_examples=60, deadline=None)
@given(tables, tables)
def test_product_then_sum_matches_numpy(a, b):
    pa = HybridPotential.from_table((0, 1), (2, 3), a)
    pb = HybridPotential.from_table((1, 2), (3, 2), b.T)
    got = np.exp(marginalize(multiply(pa, pb), [1]).log_values())
    want = np.einsum("ij,jk->ik", a, b.T)
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(tables)
def test_normalize_gives_unit_mass(a):
    p = normalize(HybridPotential.from_table((0, 1), (2, 3), a))
    if a.sum() > 0:
        assert total_log_mass(p) == pytest.approx(0.0, abs=1e-10)
    else:
        assert p.is_all_zero()


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(-5, 5), st.floats(0.1, 5))
def test_gaussian_product_closed_form(m1, v1, m2, v2):
    p = multiply(HybridPotential.gaussian((0,), [m1], [[v1]]), HybridPotential.gaussian((0,), [m2], [[v2]]))
    lw, mean, cov = from_canonical(float(p.g), p.h, p.K)
    v = 1 / (1 / v1 + 1 / v2)
    assert cov[0, 0] == pytest.approx(v)
    assert mean[0] == pytest.approx(v * (m1 / v1 + m2 / v2), abs=1e-9)
    assert float(log_mass(p)) == pytest.approx(-0.5 * np.log(2 * np.pi * (v1 + v2)) - (m1 - m2) ** 2 / (2 * (v1 + v2)))
