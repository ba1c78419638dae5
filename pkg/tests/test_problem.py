import numpy as np
import pytest

from ergodic_bellman import (NonElliptic, ProblemSpec, UnknownProblem, builtin,
                             bump, catalog_names, constant, eval_coeff,
                             polynomial, validate_assumptions, zero)


def test_validate_ou_quadratic():
    spec = builtin("ou-quadratic")
    rep = validate_assumptions(spec, window_radius=12.0)
    assert rep.nu1 == rep.nu2 == 1.0
    assert rep.mu1 == rep.mu2 == 1.0
    assert rep.c_low == pytest.approx(1.0, abs=1e-14)
    assert rep.c_high == pytest.approx(1.0, abs=1e-14)
    assert rep.passed_a3                      # U0 = x^2/2 grows
    # direct evaluation of U0 with W0 = 0
    xs = np.linspace(-5, 5, 11)
    assert spec.u0(xs) == pytest.approx(xs**2 / 2)


def test_constant_ratio_two():
    spec = ProblemSpec(kind="pde1d", a=constant(1.0), ahat=constant(2.0),
                       b=polynomial((1, -1.0)), v0=polynomial((2, -0.5)),
                       vbar=zero(), w0=zero())
    rep = validate_assumptions(spec)
    assert rep.c_low == pytest.approx(2.0)
    assert rep.c_high == pytest.approx(2.0)


def test_non_elliptic():
    spec = ProblemSpec(kind="pde1d", a=constant(1.0),
                       ahat=constant(1.0).plus(bump(-1.5, 0.0, 1.0)),
                       b=polynomial((1, -1.0)), v0=zero(), vbar=zero(),
                       w0=zero())
    with pytest.raises(NonElliptic):
        validate_assumptions(spec)


def test_builtin_ou_quadratic_potential():
    spec = builtin("ou-quadratic")
    xs = np.linspace(-3, 3, 7)
    assert eval_coeff(spec.v0, xs, 0) == pytest.approx(-xs**2 / 2)
    assert eval_coeff(spec.b, xs, 0) == pytest.approx(-xs)


def test_builtin_confining_v_assumption_with_zero_w0():
    spec = builtin("confining-v")
    assert spec.w0 == zero()
    rep = validate_assumptions(spec)
    assert rep.passed_a3


def test_builtin_unknown():
    with pytest.raises(UnknownProblem):
        builtin("no-such")


@pytest.mark.parametrize("name", [n for n in catalog_names()
                                  if builtin(n).kind == "pde1d"])
def test_catalog_assumptions_window_12(name):
    rep = validate_assumptions(builtin(name), window_radius=12.0)
    assert rep.passed, f"{name}: {rep}"


@pytest.mark.parametrize("name", [n for n in catalog_names()
                                  if builtin(n).kind == "pde1d"])
def test_remark_comparability_bounds(name):
    spec = builtin(name)
    rep = validate_assumptions(spec)
    xs = np.linspace(-12, 12, 1501)
    av = eval_coeff(spec.a, xs, 0)
    hv = eval_coeff(spec.ahat, xs, 0)
    assert np.all(rep.c_low * av <= hv + 1e-12)
    assert np.all(hv <= rep.c_high * av + 1e-12)
    # bound consistency with the ellipticity constants
    assert rep.c_low >= rep.mu1 / rep.nu2 - 1e-12
    assert rep.c_high <= rep.mu2 / rep.nu1 + 1e-12


def test_growing_diffusion_rejected():
    with pytest.raises(ValueError):
        ProblemSpec(kind="pde1d", a=polynomial((1, 1.0)), ahat=constant(1.0),
                    b=zero(), v0=zero(), vbar=zero(), w0=zero())


def test_leqg_validation():
    with pytest.raises(ValueError):
        ProblemSpec(kind="leqg", dim=2,
                    d_mat=np.eye(2), m_mat=np.array([[0.0, 1.0], [0.0, 0.0]]),
                    a_mat=np.eye(2), ahat_mat=np.eye(2),
                    v_vec=np.zeros(2))
    with pytest.raises(ValueError):
        ProblemSpec(kind="leqg", dim=2,
                    d_mat=np.eye(2), m_mat=-np.eye(2),
                    a_mat=-np.eye(2), ahat_mat=np.eye(2),
                    v_vec=np.zeros(2))


def test_json_round_trip_pde1d():
    spec = builtin("ou-bounded-v")
    back = ProblemSpec.from_json(spec.to_json())
    assert back.to_json() == spec.to_json()
    xs = np.linspace(-4, 4, 9)
    assert back.v_total(xs) == pytest.approx(spec.v_total(xs))


def test_json_round_trip_leqg():
    spec = builtin("leqg-2d")
    back = ProblemSpec.from_json(spec.to_json())
    assert np.allclose(back.d_mat, spec.d_mat)
    assert np.allclose(back.ahat_mat, spec.ahat_mat)
    assert np.allclose(back.v_vec, spec.v_vec)
