"""Nonlinear Dirichlet solves of the ergodic Bellman equation on [-R, R].

The equation at a fixed level Lambda,

    0.5 a W'' + 0.5 ahat (W')^2 + bt W' + V = Lambda,   W(+-R) given,

is discretized with second-order central stencils.  A plain Newton iteration
on this system is numerically degenerate whenever the induced drift confines:
the linearized operator then has a flat mode whose eigenvalue is of order
exp(-c R^2), far below float precision, and raw Newton steps blow up along it.

The solver therefore works with a bordered system.  An extra scalar unknown mu
(a uniform shift of the level) absorbs the flat direction, and the value of W
at the center node is pinned to a parameter c:

    F_i(W) - mu = 0   for interior i,      W(0) = c.

For each c the bordered Newton iteration is well conditioned and converges to
the unique solution of the shifted problem; the implied shift mu(c) is a
smooth decreasing function of c.  A root of mu(c) = 0 (located by a guarded
Illinois iteration) is a solution of the original problem at level Lambda.
When mu(c) instead flattens at a positive plateau, no solution exists at this
level on this ball: Lambda sits below the solvable range, which is reported
as NoConvergence evidence rather than proof.

The same machinery exposes a plateau mode used by the critical-value solver:
marching c upward until mu(c) stabilizes yields the bottom of the solvable
half-line of the discrete system together with its solution profile.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .coefficients import eval_coeff
from .grid import Field, Grid, d1, make_grid
from .problem import ProblemSpec

ARMIJO_FACTOR = 0.5
ARMIJO_MIN_STEP = 1e-6
MU_TOL = 1e-11
EPS = np.finfo(float).eps


class NoConvergence(RuntimeError):
    """Newton failed; at low levels this signals Lambda below the solvable range."""


@dataclass
class GridSolution:
    """Converged solution, normalized so that W(normalized_at) = 0."""

    grid: Grid
    w: Field
    lam: float
    residual_norm: float
    iterations: int
    normalized_at: float = 0.0
    pre_normalization_constant: float = 0.0
    tolerance: float = 1e-10
    mu: float = 0.0
    init_used: str = ""

    def summary(self) -> dict:
        return {"lambda": self.lam, "residual_norm": self.residual_norm,
                "iterations": self.iterations,
                "pre_normalization_constant": self.pre_normalization_constant,
                "tolerance": self.tolerance}

    def to_csv(self) -> str:
        xs = self.grid.nodes
        w = self.w.values
        dw = d1(self.w).values
        res = np.zeros_like(w)
        return "x,W,dW,residual\n" + "".join(
            f"{x:.17g},{a:.17g},{b:.17g},{r:.17g}\n"
            for x, a, b, r in zip(xs, w, dw, res))


class _Terms:
    """Coefficient samples on a grid, shared by residual and Jacobian."""

    def __init__(self, spec: ProblemSpec, grid: Grid):
        x = grid.nodes
        self.x = x
        self.h = grid.h
        self.a = eval_coeff(spec.a, x, 0)
        self.ahat = eval_coeff(spec.ahat, x, 0)
        self.bt = spec.b_tilde(x)
        self.v = spec.v_total(x)

    def residual_interior(self, w: np.ndarray, lam: float) -> np.ndarray:
        h = self.h
        dd = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
        dw = (w[2:] - w[:-2]) / (2 * h)
        i = slice(1, -1)
        return (0.5 * self.a[i] * dd + 0.5 * self.ahat[i] * dw**2
                + self.bt[i] * dw + self.v[i] - lam)

    def fp_floor(self, w: np.ndarray) -> float:
        # rounding floor of the residual evaluation for fields of this size
        return 32 * EPS * (np.max(np.abs(w)) + 1.0) * np.max(self.a) / self.h**2


def residual(spec: ProblemSpec, grid: Grid, w: Field, lam: float) -> Field:
    """Interior Bellman residual; boundary nodes carry 0."""
    t = _Terms(spec, grid)
    out = np.zeros(grid.n)
    out[1:-1] = t.residual_interior(w.values, lam)
    return Field(grid, out)


def _newton_step(t: _Terms, w: np.ndarray, mu: float, c: float, lam: float,
                 mid: int):
    """One bordered step: [[J, -1], [e_c, 0]] [dW, dmu] = [-(F-mu), c-W(0)].

    Solved directly as a sparse arrow system; forming the step from two
    tridiagonal solves would cancel catastrophically at confining drifts.
    """
    h = t.h
    ni = len(t.x) - 2
    dw = (w[2:] - w[:-2]) / (2 * h)
    i = slice(1, -1)
    m = t.ahat[i] * dw + t.bt[i]
    lower = 0.5 * t.a[i] / h**2 - m / (2 * h)
    diag = -t.a[i] / h**2
    upper = 0.5 * t.a[i] / h**2 + m / (2 * h)
    ar = np.arange(ni)
    rows = np.concatenate([ar, ar[1:], ar[:-1], ar, [ni]])
    cols = np.concatenate([ar, ar[1:] - 1, ar[:-1] + 1,
                           np.full(ni, ni), [mid - 1]])
    vals = np.concatenate([diag, lower[1:], upper[:-1],
                           np.full(ni, -1.0), [1.0]])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(ni + 1, ni + 1))
    rhs = np.empty(ni + 1)
    rhs[:ni] = -(t.residual_interior(w, lam) - mu)
    rhs[ni] = c - w[mid]
    sol = spla.spsolve(A, rhs)
    res = max(float(np.max(np.abs(rhs[:ni]))), abs(rhs[ni]))
    return sol[:ni], float(sol[ni]), res


def _inner(t: _Terms, w0: np.ndarray, lam: float, c: float, mu0: float,
           budget: list, max_iter: int = 30):
    """Damped bordered Newton at pinned center value c."""
    mid = (len(t.x)) // 2
    w = w0.copy()
    mu = mu0
    res = np.inf
    for _ in range(max_iter):
        if budget[0] <= 0:
            break
        budget[0] -= 1
        floor = t.fp_floor(w)
        tol = max(1e-12, floor)
        dw, dmu, res = _newton_step(t, w, mu, c, lam, mid)
        if res <= tol:
            return w, mu, True, res
        step = 1.0
        moved = False
        while step >= ARMIJO_MIN_STEP:
            wt = w.copy()
            wt[1:-1] += step * dw
            mut = mu + step * dmu
            rest = max(float(np.max(np.abs(t.residual_interior(wt, lam) - mut))),
                       abs(c - wt[mid]))
            if rest <= (1 - 0.25 * step) * res:
                w, mu, res = wt, mut, rest
                moved = True
                break
            step *= ARMIJO_FACTOR
        if not moved:
            return w, mu, res <= max(1e-9, 10 * tol), res
    return w, mu, res <= max(1e-9, 10 * max(1e-12, t.fp_floor(w))), res


def _outer(t: _Terms, lam: float, w_init: np.ndarray, budget: list,
           mode: str = "root", mu_tol: float = MU_TOL, max_evals: int = 80):
    """Locate mu(c) = 0 (root mode) or the mu plateau (plateau mode)."""
    mid = len(t.x) // 2
    c = w_init[mid]
    mu0 = float(np.median(t.residual_interior(w_init, lam)))
    w, mu, ok, res = _inner(t, w_init, lam, c, mu0, budget)
    evals = 1
    if not ok:
        return None, f"Newton stalled from the initial guess (residual {res:.1e})"
    if mode == "root" and abs(mu) <= mu_tol:
        return (w, mu, evals), None
    pos = (c, mu) if mu > 0 else None
    neg = (c, mu) if mu < 0 else None
    step = max(0.25, min(4.0, abs(mu)))
    w_cur, mu_cur, c_cur = w, mu, c
    prev_pt = None                 # last accepted (c, mu) for secant marching
    shrinks = 0
    plateau_hits = 0
    last_probe = mu
    last_side, side_repeat = 0, 0
    while evals < max_evals and budget[0] > 0:
        if mode == "root" and pos and neg:
            (ca, fa), (cb, fb) = pos, neg
            if side_repeat >= 2:           # Illinois anti-stagnation
                if last_side > 0:
                    fb = fb / 2.0**(side_repeat - 1)
                else:
                    fa = fa / 2.0**(side_repeat - 1)
            c_new = (ca * fb - cb * fa) / (fb - fa)
            gap = abs(ca - cb)
            lo, hi = min(ca, cb), max(ca, cb)
            if not (lo + 1e-3 * gap < c_new < hi - 1e-3 * gap):
                c_new = 0.5 * (ca + cb)
        elif mode == "root":
            direction = 1.0 if mu_cur > 0 else -1.0
            c_new = c_cur + direction * step
            if prev_pt is not None:
                cp, mup = prev_pt
                slope = (mu_cur - mup) / (c_cur - cp)
                if slope < 0:              # mu(c) decreases; aim at the root
                    c_sec = c_cur - mu_cur / slope
                    if 0 < (c_sec - c_cur) * direction <= 64.0:
                        c_new = c_sec
        else:
            c_new = c_cur + step
        # predictor: the family moves along the flat direction, which is the
        # interior constant; shift the warm start accordingly
        w_pred = w_cur.copy()
        w_pred[1:-1] += c_new - c_cur
        w_new, mu_new, ok, res = _inner(t, w_pred, lam, c_new, mu_cur, budget)
        evals += 1
        if not ok:
            step *= 0.5
            shrinks += 1
            if shrinks > 24:
                return None, "continuation step collapsed"
            continue
        if mode == "root":
            if abs(mu_new) <= mu_tol:
                return (w_new, mu_new, evals), None
            bracketed = bool(pos and neg)
            if mu_new > 0:
                pos, side = (c_new, mu_new), 1
            else:
                neg, side = (c_new, mu_new), -1
            if bracketed:
                side_repeat = side_repeat + 1 if side == last_side else 0
            last_side = side
            if not (pos and neg):
                # a positive plateau means the level floor sits above lam:
                # no solution on this ball; a negative plateau just says the
                # root lies further along the march
                if mu_new > 0 and abs(mu_new - last_probe) < 1e-4 * mu_new:
                    plateau_hits += 1
                    if plateau_hits >= 3:
                        return None, (f"level gap plateau at mu={mu_new:.3e}; "
                                      "Lambda is outside the solvable range "
                                      "for this ball")
                else:
                    plateau_hits = 0
                step = min(step * 2.0, 64.0)
                last_probe = mu_new
        else:
            if abs(mu_new - mu_cur) <= max(1e-10, 1e-6 * abs(mu_new)):
                return (w_new, mu_new, evals), None
            step = min(step * 2.0, 1.0)
        prev_pt = (c_cur, mu_cur)
        w_cur, mu_cur, c_cur = w_new, mu_new, c_new
    return None, "iteration budget exhausted"


def _phi_init(t: _Terms, lam: float, wl: float, wr: float, kappa: float):
    """Linearized init via the exponential transform phi = exp(kappa W).

    One banded solve of 0.5 a phi'' + bt phi' + kappa (V - lam) phi = 0 with
    phi(+-R) = exp(kappa * data).  Where phi stays positive its log is used
    directly (small positive values keep good relative accuracy in the banded
    solve); nonpositive stretches are filled by a quadratic fit.
    """
    h = t.h
    i = slice(1, -1)
    lower = 0.5 * t.a[i] / h**2 - t.bt[i] / (2 * h)
    upper = 0.5 * t.a[i] / h**2 + t.bt[i] / (2 * h)
    diag = -t.a[i] / h**2 + kappa * (t.v[i] - lam)
    base = max(wl, wr)
    ni = len(diag)
    rhs = np.zeros(ni)
    rhs[0] -= lower[0] * np.exp(kappa * (wl - base))
    rhs[-1] -= upper[-1] * np.exp(kappa * (wr - base))
    ab = np.zeros((3, ni))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        phi = solve_banded((1, 1), ab, rhs)
    except Exception:
        return None
    if not np.all(np.isfinite(phi)) or np.max(phi) <= 0:
        return None
    xi = t.x[1:-1]
    w = np.empty(len(t.x))
    w[0], w[-1] = wl, wr
    good = phi > 0
    wi = np.full(ni, np.nan)
    wi[good] = np.log(phi[good]) / kappa + base
    if not np.all(good):
        xs = xi[good]
        A = np.vstack([xs**2, xs, np.ones(len(xs))]).T
        coef, *_ = np.linalg.lstsq(A, wi[good], rcond=None)
        fill = coef[0] * xi**2 + coef[1] * xi + coef[2]
        wi[~good] = fill[~good]
    w[1:-1] = wi
    return w


def _kappa_surrogate(t: _Terms) -> float:
    return float(np.clip(np.median(t.ahat / t.a), 1e-6, 1e6))


def _boundary_values(spec, grid, boundary):
    if boundary is None:
        r = grid.radius
        return (float(eval_coeff(spec.w0, -r, 0)), float(eval_coeff(spec.w0, r, 0)))
    if isinstance(boundary, Field):
        return float(boundary.values[0]), float(boundary.values[-1])
    wl, wr = boundary
    return float(wl), float(wr)


def _solve(spec: ProblemSpec, grid: Grid, lam: float, boundary=None,
           init: Field | None = None, max_iter: int = 400,
           mu_tol: float = MU_TOL, mode: str = "root"):
    t = _Terms(spec, grid)
    wl, wr = _boundary_values(spec, grid, boundary)
    # Near the critical level the ball carries a wide family of near-solutions
    # (branch-graft profiles cost only exp(-cR^2) in residual), so candidate
    # order decides which member is returned: the caller's init first, then
    # the data interpolant (the canonical anchor), then the exponential-
    # transform solve whose additive constant is arbitrary at resonance.
    candidates = []
    if init is not None:
        w = init.values.copy()
        w[0], w[-1] = wl, wr
        candidates.append(("user", w, 12))
    candidates.append(("interpolant",
                       wl + (wr - wl) * (t.x - t.x[0]) / (t.x[-1] - t.x[0]),
                       40))
    kbar = _kappa_surrogate(t)
    wphi = _phi_init(t, lam, wl, wr, kbar)
    if wphi is not None:
        candidates.append(("transform", wphi, 40))
    # homotopy fallback: at near-critical levels the direct linear solve is
    # beyond float precision, but the solve at a lifted level is clean and
    # lands on the solution family, from which the level continuation works
    wlift = _phi_init(t, lam + 1.0, wl, wr, kbar)
    if wlift is not None:
        candidates.append(("lifted-transform", wlift, 40))
    used_total = 0
    reasons = []
    for tag, w0, evcap in candidates:
        budget = [max_iter]
        got, why = _outer(t, lam, np.asarray(w0, dtype=float), budget,
                          mode=mode, mu_tol=mu_tol, max_evals=evcap)
        used_total += max_iter - budget[0]
        if got is not None:
            w, mu, evals = got
            return w, mu, used_total, tag, t
        reasons.append(f"[{tag}] {why}")
    raise NoConvergence("; ".join(reasons))


def solve_dirichlet(spec: ProblemSpec, grid: Grid, lam: float, boundary=None,
                    init: Field | None = None, max_iter: int = 400,
                    mu_tol: float = MU_TOL) -> GridSolution:
    """Solve the Dirichlet problem at level lam; boundary defaults to W0 data.

    Raises NoConvergence when Newton stalls or the level-gap evidence shows
    lam below the solvable range of this ball (a numerical signal, not proof).
    """
    w, mu, used, tag, t = _solve(spec, grid, lam, boundary, init,
                                 max_iter, mu_tol)
    res_norm = float(np.max(np.abs(t.residual_interior(w, lam))))
    tol = max(1e-10, 10 * t.fp_floor(w), 2 * abs(mu))
    mid = grid.center_index
    const = float(w[mid])
    wn = w - const
    return GridSolution(grid=grid, w=Field(grid, wn), lam=lam,
                        residual_norm=res_norm, iterations=used,
                        normalized_at=0.0, pre_normalization_constant=const,
                        tolerance=tol, mu=mu, init_used=tag)


def solve_level_bottom(spec: ProblemSpec, grid: Grid, lam_base: float,
                       boundary=None, init: Field | None = None,
                       max_iter: int = 400):
    """Plateau mode: bottom of the solvable half-line of the discrete system.

    Returns (lambda_bottom, solution at that level, plateau drift estimate).
    """
    t = _Terms(spec, grid)
    wl, wr = _boundary_values(spec, grid, boundary)
    candidates = []
    if init is not None:
        w = init.values.copy()
        w[0], w[-1] = wl, wr
        candidates.append(("user", w))
    wphi = _phi_init(t, lam_base, wl, wr, _kappa_surrogate(t))
    if wphi is not None:
        candidates.append(("transform", wphi))
    reasons = []
    for tag, w0 in candidates:
        budget = [max_iter]
        got, why = _outer(t, lam_base, np.asarray(w0, float), budget,
                          mode="plateau")
        if got is not None:
            w, mu, evals = got
            lam_bottom = lam_base + mu
            res_norm = float(np.max(np.abs(t.residual_interior(w, lam_bottom))))
            mid = grid.center_index
            const = float(w[mid])
            sol = GridSolution(grid=grid, w=Field(grid, w - const),
                               lam=lam_bottom, residual_norm=res_norm,
                               iterations=max_iter - budget[0],
                               pre_normalization_constant=const,
                               tolerance=max(1e-10, 10 * t.fp_floor(w)),
                               mu=0.0, init_used=tag)
            return lam_bottom, sol
        reasons.append(f"[{tag}] {why}")
    raise NoConvergence("; ".join(reasons))


def gradient_bound_sweep(spec: ProblemSpec, lam: float, r: float,
                         R_list, n_default: int = 2001,
                         R_default: float = 8.0) -> list:
    """Sup of |W_R'| over [-r, r] for each outer radius R (all with R > 2r).

    Returns one row per radius: {R, sup_grad, converged}; grids share the
    spacing of the (R_default, n_default) production grid.
    """
    rows = []
    h = 2.0 * R_default / (n_default - 1)
    for R in R_list:
        if not R >= 2 * r:
            raise ValueError(f"each R must cover 2r; got R={R}, r={r}")
        n = int(round(2 * R / h)) + 1
        if n % 2 == 0:
            n += 1
        grid = make_grid(R, n)
        try:
            sol = solve_dirichlet(spec, grid, lam)
        except NoConvergence as exc:
            raise NoConvergence(f"R={R}: {exc}") from exc
        g = d1(sol.w).values
        mask = np.abs(grid.nodes) <= r + 0.5 * grid.h
        rows.append({"R": float(R), "sup_grad": float(np.max(np.abs(g[mask]))),
                     "residual_norm": sol.residual_norm})
    return rows
