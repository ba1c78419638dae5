import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodic_bellman import CoefficientModel1D, bump, constant, eval_coeff, polynomial


def test_constant_field():
    c = constant(1.0)
    assert eval_coeff(c, 3.7, 0) == 1.0
    assert eval_coeff(c, 3.7, 1) == 0.0
    assert eval_coeff(c, 3.7, 2) == 0.0


def test_poly_first_derivative():
    c = polynomial((2, -0.5))          # -x^2/2
    assert eval_coeff(c, 2.0, 1) == pytest.approx(-2.0, abs=0)


def test_bump_second_derivative_at_center():
    # oracle: d2/dx2 A exp(-(x-m)^2/(2 s^2)) at x=m is -A/s^2
    c = bump(1.0, 0.0, 1.0)
    assert eval_coeff(c, 0.0, 2) == pytest.approx(-1.0, abs=1e-15)
    c2 = bump(2.0, 1.0, 0.5)
    assert eval_coeff(c2, 1.0, 2) == pytest.approx(-2.0 / 0.25, rel=1e-14)


def test_vectorized_matches_scalar():
    c = CoefficientModel1D(0.3, ((1, -1.0), (3, 0.2)), ((0.5, 1.0, 0.7),))
    xs = np.linspace(-3, 3, 11)
    for order in (0, 1, 2):
        vec = eval_coeff(c, xs, order)
        assert vec == pytest.approx([eval_coeff(c, float(x), order) for x in xs])


def test_degree_cap_and_width_validation():
    with pytest.raises(ValueError):
        CoefficientModel1D(poly=((5, 1.0),))
    with pytest.raises(ValueError):
        CoefficientModel1D(bumps=((1.0, 0.0, 0.0),))
    with pytest.raises(ValueError):
        eval_coeff(constant(1.0), 0.0, 3)


def test_leading_term():
    assert polynomial((2, -0.5), (1, 3.0)).leading_term() == (2, -0.5)
    assert constant(2.0).leading_term() == (0, 2.0)
    assert bump(1.0).leading_term() == (0, 0.0)
    # cancelling contributions at the same degree
    c = CoefficientModel1D(poly=((2, 1.0), (2, -1.0), (1, 0.5)))
    assert c.leading_term() == (1, 0.5)


def test_serialization_round_trip():
    c = CoefficientModel1D(0.1, ((2, -0.5), (4, 0.01)), ((1.0, -0.3, 0.8),))
    back = CoefficientModel1D.from_dict(c.to_dict())
    assert back == c


coeff_models = st.builds(
    CoefficientModel1D,
    st.floats(-2, 2),
    st.lists(st.tuples(st.integers(0, 4), st.floats(-2, 2)),
             max_size=3).map(tuple),
    st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2),
                       st.floats(0.3, 2.0)), max_size=2).map(tuple),
)


@settings(max_examples=60, deadline=None)
@given(coeff_models, st.floats(-3, 3), st.integers(1, 2))
def test_derivatives_match_central_differences(c, x, order):
    # observed convergence order of central differences must be >= 1.9
    # wherever truncation error dominates the cancellation floor
    eps = np.finfo(float).eps
    errs, floors = [], []
    for h in (1e-2, 1e-3):
        stencil = [eval_coeff(c, x - h, 0), eval_coeff(c, x, 0),
                   eval_coeff(c, x + h, 0)]
        if order == 1:
            fd = (stencil[2] - stencil[0]) / (2 * h)
        else:
            fd = (stencil[2] - 2 * stencil[1] + stencil[0]) / h**2
        errs.append(abs(fd - eval_coeff(c, x, order)))
        floors.append(100 * eps * (1 + max(abs(v) for v in stencil)) / h**order)
    scale = 1.0 + abs(eval_coeff(c, x, order))
    if errs[0] > 10 * floors[0] and errs[1] > 10 * floors[1]:
        assert np.log10(errs[0] / errs[1]) >= 1.9
    else:
        assert errs[1] <= max(1e-6 * scale, 10 * floors[1])
