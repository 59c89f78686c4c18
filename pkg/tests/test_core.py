import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plsimel.core import (
    Family,
    Identification,
    ModelSpec,
    Series,
    Theta,
    full_jacobian,
    jacobian_gamma2,
    materialize_gamma2,
)
from plsimel.errors import ConfigError, DataError, DomainError, SingularityError

FIX = ModelSpec.plsim(2, 3)
UNIT = ModelSpec.plsim(2, 3, Identification.UNIT_NORM)


def test_materialize_fix_first_design_value():
    np.testing.assert_array_equal(materialize_gamma2(Theta([0, 0], [1, 1]), FIX), [1, 1, 1])


def test_materialize_unit_norm_examples():
    np.testing.assert_array_equal(materialize_gamma2(Theta([0, 0], [0, 0]), UNIT), [1, 0, 0])
    np.testing.assert_allclose(materialize_gamma2(Theta([0, 0], [0.6, 0]), UNIT), [0.8, 0.6, 0], atol=1e-15)


def test_materialize_unit_norm_outside_ball():
    with pytest.raises(DomainError):
        materialize_gamma2(Theta([0, 0], [0.8, 0.8]), UNIT)


def test_jacobian_examples():
    expected = [[0, 0], [1, 0], [0, 1]]
    np.testing.assert_array_equal(jacobian_gamma2(Theta([0, 0], [3, -2]), FIX), expected)
    np.testing.assert_array_equal(jacobian_gamma2(Theta([0, 0], [0, 0]), UNIT), expected)
    np.testing.assert_allclose(
        jacobian_gamma2(Theta([0, 0], [0.6, 0]), UNIT), [[-0.75, 0], [1, 0], [0, 1]], atol=1e-15
    )


def test_jacobian_on_unit_sphere_is_singular():
    with pytest.raises(SingularityError):
        jacobian_gamma2(Theta([0, 0], [0.6, 0.8]), UNIT)


def test_full_jacobian_blocks():
    J = full_jacobian(Theta([0.3, 0.1], [1, 1]), FIX)
    assert J.shape == (5, 4)
    np.testing.assert_array_equal(J[:2, :2], np.eye(2))
    np.testing.assert_array_equal(J[:2, 2:], 0)
    np.testing.assert_array_equal(J[2:, :2], 0)


def test_full_jacobian_empty_linear_part():
    spec = ModelSpec.plsim(0, 3)
    th = Theta([], [0.2, 0.1])
    np.testing.assert_array_equal(full_jacobian(th, spec), jacobian_gamma2(th, spec))


def test_full_jacobian_unit_norm_composition():
    spec = ModelSpec.plsim(1, 3, Identification.UNIT_NORM)
    J = full_jacobian(Theta([0.5], [0.6, 0]), spec)
    expected = np.zeros((4, 3))
    expected[0, 0] = 1
    expected[1:, 1:] = [[-0.75, 0], [1, 0], [0, 1]]
    np.testing.assert_allclose(J, expected, atol=1e-15)


def _inside_ball(v):
    return float(np.dot(v, v)) < 0.98


free2 = st.lists(st.floats(-0.99, 0.99), min_size=2, max_size=2).filter(_inside_ball)


@settings(max_examples=200, deadline=None)
@given(free2)
def test_unit_norm_orthogonality(g):
    th = Theta([0, 0], g)
    g2 = materialize_gamma2(th, UNIT)
    assert abs(np.linalg.norm(g2) - 1) < 1e-12
    assert g2[0] >= 0
    assert np.max(np.abs(g2 @ jacobian_gamma2(th, UNIT))) < 1e-12


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(11)
    step = 1e-6
    done = 0
    while done < 100:
        g = rng.uniform(-1, 1, 2)
        if g @ g >= 0.95:
            continue
        th = Theta([0, 0], g)
        fd = np.empty((3, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            plus = materialize_gamma2(Theta([0, 0], g + e), UNIT)
            minus = materialize_gamma2(Theta([0, 0], g - e), UNIT)
            fd[:, k] = (plus - minus) / (2 * step)
        np.testing.assert_allclose(jacobian_gamma2(th, UNIT), fd, atol=1e-6)
        done += 1


def test_fix_first_jacobian_constant():
    a = jacobian_gamma2(Theta([0, 0], [5, -3]), FIX)
    b = jacobian_gamma2(Theta([0, 0], [0.1, 0.2]), FIX)
    np.testing.assert_array_equal(a, b)


def test_spec_invariants():
    with pytest.raises(ConfigError):
        ModelSpec.plsim(2, 1)
    with pytest.raises(ConfigError):
        ModelSpec(Family.PLSIM, 2, 3, d_beta=2)
    with pytest.raises(ConfigError):
        ModelSpec(Family.PLSIM, 2, 3, variance_form="ArchLag1")
    spec = ModelSpec.chplsim(2, 3, "LogSquare")
    assert spec.moment_dim == 2 + 3 - 1 + 2
    assert spec.r == 1 and spec.d_beta == 2
    assert FIX.moment_dim == 4


def test_spec_dict_round_trip():
    spec = ModelSpec.chplsim(1, 4, "ArchLag1", Identification.UNIT_NORM)
    assert ModelSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        ModelSpec.from_dict({**spec.to_dict(), "bogus": 1})


def test_theta_check_and_free_vector():
    th = Theta([0.1, 0.2], [1, 1])
    th.check(FIX)
    np.testing.assert_array_equal(th.free_vector(), [0.1, 0.2, 1, 1])
    back = th.with_free_vector([1, 2, 3, 4])
    np.testing.assert_array_equal(back.gamma1, [1, 2])
    np.testing.assert_array_equal(back.gamma2_free, [3, 4])
    with pytest.raises(ConfigError):
        Theta([0.1], [1, 1]).check(FIX)


def test_theta_from_gamma2_rescales():
    th = Theta.from_gamma2([0.1], [2, 2, 4], identification="FixFirst")
    np.testing.assert_allclose(th.gamma2_free, [1, 2])
    th = Theta.from_gamma2([0.1], [-1, -1, 0], identification="UnitNorm")
    np.testing.assert_allclose(th.gamma2_free, [1 / np.sqrt(2), 0])


def test_series_validation():
    y = np.zeros(5)
    with pytest.raises(DataError):
        Series(y, np.zeros((4, 2)), np.zeros((5, 3)))
    with pytest.raises(DataError):
        Series(np.array([0, 1, np.nan, 0, 0.0]), np.zeros((5, 2)), np.zeros((5, 3)))
    s = Series(y, np.zeros((5, 2)), np.ones((5, 3)))
    assert s.n == 5
    with pytest.raises(DataError):
        s.check(ModelSpec.plsim(1, 3))
