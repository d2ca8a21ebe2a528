import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tedamage import tensor
from tedamage.errors import InvalidArgument
from tedamage.tensor import ElasticModuli, SymTensor2

finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(0.01, 100.0)


@st.composite
def sym(draw, dim=None):
    d = dim or draw(st.sampled_from([2, 3]))
    return SymTensor2(d, tuple(draw(finite) for _ in range(d * (d + 1) // 2)))


@st.composite
def moduli_and_pair(draw):
    d = draw(st.sampled_from([2, 3]))
    return ElasticModuli(draw(positive), draw(positive), d), draw(sym(d)), draw(sym(d))


def dense_A(lam, mu, m):
    return lam * np.trace(m) * np.eye(len(m)) + 2 * mu * m


# -- storage -----------------------------------------------------------------


def test_full_matrix_is_symmetric():
    s = SymTensor2(3, (1, 2, 3, 4, 5, 6))
    m = s.to_matrix()
    assert np.array_equal(m, m.T)
    assert SymTensor2.from_matrix(m) == s


def test_wrong_entry_count_rejected():
    with pytest.raises(InvalidArgument):
        SymTensor2(2, (1.0, 2.0))
    with pytest.raises(InvalidArgument):
        SymTensor2(4, (0.0,) * 10)


def test_moduli_must_be_positive():
    with pytest.raises(InvalidArgument):
        ElasticModuli(0.0, 1.0)
    with pytest.raises(InvalidArgument):
        ElasticModuli(1.0, -1.0)


# -- apply_A -----------------------------------------------------------------


def test_A_of_identity():
    r = tensor.apply_A(ElasticModuli(1, 1, 2), SymTensor2.identity(2))
    assert np.allclose(r.to_matrix(), 4 * np.eye(2), rtol=0, atol=0)


def test_A_of_zero():
    assert tensor.apply_A(ElasticModuli(3, 7, 3), SymTensor2.zeros(3)) == SymTensor2.zeros(3)


def test_A_against_dense_oracle():
    s = np.array([[1.0, 1.0], [1.0, 0.0]])
    r = tensor.apply_A(ElasticModuli(2, 3, 2), SymTensor2.from_matrix(s))
    # 2*1*I + 6*s
    assert np.array_equal(r.to_matrix(), np.array([[8.0, 6.0], [6.0, 2.0]]))
    assert np.allclose(r.to_matrix(), dense_A(2, 3, s), rtol=1e-15)


def test_dimension_mismatch_raises():
    m = ElasticModuli(1, 1, 2)
    with pytest.raises(InvalidArgument):
        tensor.apply_A(m, SymTensor2.identity(3))
    with pytest.raises(InvalidArgument):
        tensor.apply_A_sqrt(m, SymTensor2.identity(3))
    with pytest.raises(InvalidArgument):
        tensor.energy_density_B(m, SymTensor2.identity(3))


# -- A^(1/2) -----------------------------------------------------------------


def test_sqrt_of_identity():
    r = tensor.apply_A_sqrt(ElasticModuli(1, 1, 2), SymTensor2.identity(2))
    assert np.allclose(r.to_matrix(), 2 * np.eye(2), rtol=0, atol=1e-15)


def test_sqrt_of_zero():
    assert tensor.apply_A_sqrt(ElasticModuli(1, 2, 2), SymTensor2.zeros(2)).norm() == 0.0


@given(moduli_and_pair())
def test_sqrt_composition(args):
    m, s, _ = args
    a = tensor.apply_A(m, s)
    twice = tensor.apply_A_sqrt(m, tensor.apply_A_sqrt(m, s))
    assert (twice - a).norm() <= 1e-12 * max(a.norm(), 1e-300) + 1e-300


# -- dev ---------------------------------------------------------------------


def test_dev_identity_is_zero():
    assert tensor.dev(SymTensor2.identity(3)).norm() == 0.0


def test_dev_fixes_tracefree():
    s = SymTensor2(2, (1.0, -1.0, 0.5))
    assert tensor.dev(s) == s


@given(sym(), sym())
def test_dev_properties(t, s):
    if s.dim != t.dim:
        s = SymTensor2.identity(t.dim) * 0.3
    d = t.dim
    scale = 1 + t.inner(t) + s.inner(s)
    dt = tensor.dev(t)
    assert abs(dt.trace) <= 1e-12 * scale
    assert dt.norm() <= t.norm() * (1 + 1e-14) + 1e-300
    assert abs(dt.inner(s) - t.inner(tensor.dev(s))) <= 1e-12 * scale
    assert abs(dt.inner(dt) - (t.inner(t) - t.trace**2 / d)) <= 1e-12 * scale


# -- B -----------------------------------------------------------------------


def test_B_of_identity():
    assert tensor.energy_density_B(ElasticModuli(1, 1, 2), SymTensor2.identity(2)) == 8.0


def test_B_of_zero():
    assert tensor.energy_density_B(ElasticModuli(5, 5, 3), SymTensor2.zeros(3)) == 0.0


@given(moduli_and_pair())
def test_B_against_full_contraction(args):
    m, s, _ = args
    M = s.to_matrix()
    oracle = float(np.sum(dense_A(m.lam, m.mu, M) * M))
    got = tensor.energy_density_B(m, s)
    assert got >= 0
    assert math.isclose(got, oracle, rel_tol=1e-12, abs_tol=1e-9)


def test_B_array_matches_scalar(rng):
    m = ElasticModuli(2.5, 1.5, 2)
    mats = rng.normal(size=(4, 3, 2, 2))
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    arr = tensor.B_array(m, mats)
    for idx in np.ndindex(4, 3):
        assert math.isclose(arr[idx], tensor.energy_density_B(m, SymTensor2.from_matrix(mats[idx])),
                            rel_tol=1e-13)


# -- positive part -----------------------------------------------------------


@pytest.mark.parametrize("a, expected", [(3.0, 3.0), (-2.0, 0.0), (0.0, 0.0)])
def test_positive_part_examples(a, expected):
    assert tensor.positive_part(a) == expected


def test_positive_part_derivative_at_kink_is_zero():
    assert tensor.positive_part_derivative(0.0) == 0.0
    assert tensor.positive_part_derivative(1e-30) == 1.0


@given(finite, finite)
def test_positive_part_monotone_and_nonexpansive(c, d):
    pc, pd = tensor.positive_part(c), tensor.positive_part(d)
    assert (pc - pd) * (c - d) >= (pc - pd) ** 2 - 1e-9
    assert abs(pc - pd) <= abs(c - d) + 1e-12


# -- operator constants ------------------------------------------------------


@given(moduli_and_pair())
def test_lipschitz_bound(args):
    m, t, s = args
    lhs = (tensor.apply_A(m, t) - tensor.apply_A(m, s)).norm()
    assert lhs <= m.lipschitz_constant * (t - s).norm() * (1 + 1e-12) + 1e-9


def test_lipschitz_constant_value():
    assert ElasticModuli(2.0, 3.0, 2).lipschitz_constant == 2 * 2.0 * 2 + 2 * 3.0
    assert ElasticModuli(2.0, 3.0, 3).lipschitz_constant == 2 * 2.0 * 3 + 2 * 3.0


@given(moduli_and_pair())
def test_coercivity_with_2mu(args):
    m, t, _ = args
    lhs = tensor.apply_A(m, t).inner(t)
    assert lhs >= m.ellipticity_constant * t.inner(t) * (1 - 1e-12) - 1e-9
    assert m.ellipticity_constant == 2 * m.mu


def test_literature_constant_is_recorded_only():
    m = ElasticModuli(1.0, 4.0, 2)
    assert m.ellipticity_constant_literature == 1 / 8
    assert m.ellipticity_constant == 8.0


@given(moduli_and_pair(), finite, finite)
def test_A_linear(args, a, b):
    m, t, s = args
    lhs = tensor.apply_A(m, t * a + s * b)
    rhs = tensor.apply_A(m, t) * a + tensor.apply_A(m, s) * b
    assert (lhs - rhs).norm() <= 1e-12 * (1 + rhs.norm() + abs(a) * tensor.apply_A(m, t).norm()
                                          + abs(b) * tensor.apply_A(m, s).norm())
