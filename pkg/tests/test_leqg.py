import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodic_bellman import (ComplexRoots, NoStabilizing, ProblemSpec,
                             assemble, builtin, constant, lambda_star,
                             linear_drift, make_grid, polynomial,
                             riccati_roots_1d, riccati_stabilizing_nd,
                             scale_classify, zero)

SQ2 = np.sqrt(2.0)


def test_roots_ou_case():
    km, kp = riccati_roots_1d(D=-1.0, M=-1.0, a=1.0, ahat=1.0)
    assert km == pytest.approx(1 - SQ2, abs=1e-14)
    assert kp == pytest.approx(1 + SQ2, abs=1e-14)
    # back-substitution into ahat K^2 + 2 D K + M = 0
    for k in (km, kp):
        assert k * k - 2 * k - 1 == pytest.approx(0.0, abs=1e-12)


def test_roots_factorable():
    km, kp = riccati_roots_1d(D=-1.0, M=0.0, a=1.0, ahat=1.0)
    assert km == 0.0
    assert kp == 2.0


def test_roots_complex():
    with pytest.raises(ComplexRoots):
        riccati_roots_1d(D=0.0, M=1.0, a=1.0, ahat=1.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(-3, 3), st.floats(-4, -0.05), st.floats(0.1, 4))
def test_roots_back_substitution_property(D, M, ahat):
    km, kp = riccati_roots_1d(D, M, 1.0, ahat)
    assert km <= kp
    for k in (km, kp):
        scale = abs(ahat * k * k) + abs(2 * D * k) + abs(M) + 1
        assert abs(ahat * k * k + 2 * D * k + M) <= 1e-10 * scale
    # branch dichotomy on the closed-loop drift
    assert D + ahat * km < 0
    assert D + ahat * kp > 0


def test_nd_reduces_to_1d():
    K = riccati_stabilizing_nd(D=[[-1.0]], M=[[-1.0]], ahat=[[1.0]])
    km, _ = riccati_roots_1d(-1.0, -1.0, 1.0, 1.0)
    assert K[0, 0] == pytest.approx(km, abs=1e-12)


def test_nd_decoupled_identity():
    K = riccati_stabilizing_nd(D=-np.eye(2), M=-np.eye(2), ahat=np.eye(2))
    assert np.allclose(K, (1 - SQ2) * np.eye(2), atol=1e-12)


def test_nd_positive_m_has_no_stabilizing_root():
    with pytest.raises(NoStabilizing):
        riccati_stabilizing_nd(D=-np.eye(2), M=np.eye(2), ahat=np.eye(2))


def test_assemble_ou_quadratic():
    sol = assemble(D=-1.0, M=-1.0, a=1.0, ahat=1.0, v=0.0)
    assert sol.e[0] == 0.0
    assert sol.lam == pytest.approx((1 - SQ2) / 2, abs=1e-14)
    assert sol.stable
    assert sol.stability_margin == pytest.approx(SQ2, abs=1e-12)
    assert sol.riccati_residual <= 1e-10
    assert sol.linear_residual <= 1e-10


def test_assemble_linear_term():
    # (D^T + K ahat) e = -v with D^T + K ahat = -sqrt(2), so e = v / sqrt(2);
    # Lambda picks up e.ahat e / 2 = 1/4
    sol = assemble(D=-1.0, M=-1.0, a=1.0, ahat=1.0, v=1.0)
    assert sol.e[0] == pytest.approx(1.0 / SQ2, abs=1e-13)
    assert sol.lam == pytest.approx((1 - SQ2) / 2 + 0.25, abs=1e-13)
    # back-substitution of the e equation
    assert (-1.0 + sol.K[0, 0] * 1.0) * sol.e[0] + 1.0 == pytest.approx(
        0.0, abs=1e-13)


def test_leqg_2d_catalog_decouples():
    spec = builtin("leqg-2d")
    sol = assemble(spec.d_mat, spec.m_mat, spec.a_mat, spec.ahat_mat,
                   spec.v_vec)
    assert sol.stable
    # separability oracle: each coordinate is a scalar problem
    lam_sum = 0.0
    for i in range(2):
        s = assemble(spec.d_mat[i, i], spec.m_mat[i, i], spec.a_mat[i, i],
                     spec.ahat_mat[i, i], spec.v_vec[i])
        lam_sum += s.lam
    assert sol.lam == pytest.approx(lam_sum, abs=1e-12)


@pytest.mark.slow
def test_leqg_2d_matches_spectral_per_coordinate():
    # cross-check: the per-coordinate critical values from the 1-D spectral
    # solver sum to the LEQG closed form of the decoupled 2-D problem
    spec = builtin("leqg-2d")
    total = 0.0
    for i in range(2):
        p1 = ProblemSpec(
            kind="pde1d",
            a=constant(float(spec.a_mat[i, i])),
            ahat=constant(float(spec.ahat_mat[i, i])),
            b=polynomial((1, float(spec.d_mat[i, i]))),
            v0=polynomial((2, 0.5 * float(spec.m_mat[i, i])),
                          (1, float(spec.v_vec[i]))),
            vbar=zero(), w0=zero())
        total += lambda_star(p1).lambda_star
    sol = assemble(spec.d_mat, spec.m_mat, spec.a_mat, spec.ahat_mat,
                   spec.v_vec)
    assert sol.lam == pytest.approx(total, abs=1e-5)


def test_branch_dichotomy_via_scale_test():
    km, kp = riccati_roots_1d(-1.0, -1.0, 1.0, 1.0)
    grid = make_grid(8.0, 2001)
    ergodic = scale_classify(linear_drift(grid, -1.0 + km), 6.0)
    transient = scale_classify(linear_drift(grid, -1.0 + kp), 6.0)
    assert ergodic.verdict == "ergodic"
    assert transient.verdict == "transient"


def test_json_output():
    import json
    sol = assemble(D=-1.0, M=-1.0, a=1.0, ahat=1.0, v=0.0)
    doc = json.loads(sol.to_json())
    assert doc["stable"] is True
    assert doc["lambda"] == pytest.approx((1 - SQ2) / 2)
