"""Critical value of the ergodic Bellman equation.

When ahat is proportional to a (ahat = kappa a), the substitution
phi = exp(kappa W) turns the equation into a linear eigenvalue problem

    0.5 a phi'' + bt phi' + kappa V phi = kappa Lambda phi,

and the critical value is the limit of Dirichlet principal eigenvalues on
expanding balls.  The sweep below computes those eigenvalues by shifted
inverse power iteration on balls of increasing radius (all grids share one
spacing so the trace is monotone), stops when successive values agree to the
requested tolerance, and then polishes the answer against the nonlinear
discrete system itself: the bottom of its solvable half-line on a slightly
smaller ball is located directly (level-plateau continuation), which removes
the discretization bias carried by the exponential transform.  The returned
solution profile solves the discrete equation at the returned critical value
to solver precision.

Without proportionality the transform is unavailable and a classification
bisection is used instead; its flip point is a heuristic estimate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import eval_coeff
from .dirichlet import (GridSolution, NoConvergence, solve_dirichlet,
                        solve_level_bottom)
from .grid import Field, Grid, grid_for_step, make_grid, resample, submask
from .problem import ProblemSpec

DEFAULT_SCHEDULE = (4.0, 6.0, 8.0, 10.0, 12.0)
DEFAULT_RADIUS = 8.0
DEFAULT_N = 2001


class NotConverged(RuntimeError):
    pass


class PerronViolation(RuntimeError):
    """The converged eigenvector changes sign: discretization too coarse."""


class BadBracket(ValueError):
    pass


@dataclass
class LambdaStarResult:
    lambda_star: float
    w_star: GridSolution
    method: str                  # "spectral" or "bisection"
    kappa: float | None
    r_trace: list                # (R, lambda0) pairs from the sweep
    converged: bool
    heuristic: bool = False

    def to_json(self) -> str:
        return json.dumps({"lambda_star": self.lambda_star,
                           "method": self.method,
                           "kappa": self.kappa,
                           "converged": self.converged,
                           "heuristic": self.heuristic,
                           "r_trace": [[r, l] for r, l in self.r_trace]},
                          sort_keys=True)


def kappa_of(spec: ProblemSpec, window_radius: float | None = None):
    """kappa with ahat = kappa * a to 1e-12 on the sampled window, else None."""
    if spec.kind != "pde1d":
        raise ValueError("kappa_of applies to pde1d specs")
    r = window_radius or spec.domain_radius_default
    x = np.linspace(-r, r, 2001)
    ratio = eval_coeff(spec.ahat, x, 0) / eval_coeff(spec.a, x, 0)
    mean = float(np.mean(ratio))
    if np.max(np.abs(ratio - mean)) <= 1e-12 * max(1.0, abs(mean)):
        return mean
    return None


def _operator_bands(spec: ProblemSpec, grid: Grid, kappa: float):
    x = grid.nodes
    h = grid.h
    xi = x[1:-1]
    a = eval_coeff(spec.a, xi, 0)
    bt = spec.b_tilde(xi)
    v = spec.v_total(xi)
    lower = 0.5 * a / h**2 - bt / (2 * h)   # coupling to node i-1
    upper = 0.5 * a / h**2 + bt / (2 * h)   # coupling to node i+1
    diag = -a / h**2 + kappa * v
    return lower, diag, upper


def principal_eigenvalue(spec: ProblemSpec, grid: Grid, kappa: float,
                         warm: tuple | None = None,
                         max_iter: int = 400):
    """Largest eigenvalue (in Lambda units) of the transformed operator on the
    ball, with Dirichlet zero boundary, plus its positive eigenfunction.

    Shifted inverse power iteration on the symmetrized tridiagonal matrix;
    `warm` is an optional (phi Field, lambda0) pair from a smaller ball.
    """
    lower, diag, upper = _operator_bands(spec, grid, kappa)
    ni = len(diag)
    prod = upper[:-1] * lower[1:]
    if np.any(prod <= 0):
        raise PerronViolation(
            "off-diagonal sign loss: grid too coarse for this drift")
    off = np.sqrt(prod)

    # diagonal similarity that symmetrizes the operator
    log_s = np.zeros(ni)
    log_s[1:] = np.cumsum(0.5 * (np.log(upper[:-1]) - np.log(lower[1:])))

    xi = grid.nodes[1:-1]
    if warm is not None:
        phi_w, lam_w = warm
        psi = resample(phi_w, grid, extrapolate=True).values[1:-1]
        psi = np.clip(psi, 1e-12, None) * np.exp(log_s - np.max(log_s))
        sigma = kappa * lam_w + 0.1
    else:
        psi = np.exp(-0.5 * xi**2)
        sigma = float(np.max(diag) + 2 * np.max(off)) + 0.5

    psi = psi / np.linalg.norm(psi)
    scale = float(np.max(np.abs(diag)) + 2 * np.max(off))
    lam_sym = None
    reshifted = False
    # extra sweeps after the residual test: the tiny edge components of the
    # eigenvector converge more slowly than the global residual, and the
    # polished solution inherits its boundary data from them
    extra = 4
    for it in range(max_iter):
        ab = np.zeros((3, ni))
        ab[0, 1:] = off
        ab[1, :] = diag - sigma
        ab[2, :-1] = off
        w = solve_banded((1, 1), ab, psi)
        w = w / np.linalg.norm(w)
        if w[np.argmax(np.abs(w))] < 0:
            w = -w
        tv = diag * w
        tv[1:] += off * w[:-1]
        tv[:-1] += off * w[1:]
        lam_new = float(w @ tv)
        resid = float(np.max(np.abs(tv - lam_new * w)))
        converged = (lam_sym is not None and resid <= 1e-13 * scale
                     and abs(lam_new - lam_sym)
                     <= 1e-13 * max(1.0, abs(lam_new)))
        psi, lam_sym = w, lam_new
        if converged:
            if extra == 0:
                break
            extra -= 1
        if not reshifted and it >= 3:
            sigma = lam_sym + 0.1
            reshifted = True
    else:
        raise NotConverged("inverse power iteration did not settle")

    if np.min(psi) < -1e-10 * np.max(np.abs(psi)):
        raise PerronViolation("converged eigenvector changes sign")
    psi = np.abs(psi)

    log_phi = np.log(np.clip(psi, 1e-300, None)) - log_s
    log_phi -= np.max(log_phi)
    phi = np.zeros(grid.n)
    phi[1:-1] = np.exp(log_phi)
    return lam_sym / kappa, Field(grid, phi)


def _w_from_phi(phi: Field, kappa: float) -> Field:
    """log(phi)/kappa normalized at the center, endpoints extended linearly."""
    vals = phi.values.copy()
    w = np.empty_like(vals)
    interior = slice(1, -1)
    w[interior] = np.log(np.clip(vals[interior], 1e-300, None)) / kappa
    w -= w[phi.grid.center_index]
    w[0] = 2 * w[1] - w[2]
    w[-1] = 2 * w[-2] - w[-3]
    return Field(phi.grid, w)


def lambda_star(spec: ProblemSpec, tol: float = 1e-6,
                schedule=DEFAULT_SCHEDULE, R: float = DEFAULT_RADIUS,
                n: int = DEFAULT_N) -> LambdaStarResult:
    """Critical value and distinguished solution W*.

    (R, n) set the production grid; the R-sweep keeps that spacing on every
    ball.  Falls back to classification bisection when ahat is not
    proportional to a.
    """
    if spec.kind != "pde1d":
        raise ValueError("lambda_star applies to pde1d specs; "
                         "use leqg.assemble for LEQG instances")
    kappa = kappa_of(spec)
    if kappa is None:
        return _bisect_auto(spec, R=R, n=n)

    h = 2.0 * R / (n - 1)
    trace = []
    lam_prev = None
    phi_prev = None
    grid_stop = None
    for radius in schedule:
        g = grid_for_step(radius, h)
        warm = None if phi_prev is None else (phi_prev, lam_prev)
        lam0, phi = principal_eigenvalue(spec, g, kappa, warm=warm)
        trace.append((float(radius), float(lam0)))
        grid_stop, phi_prev = g, phi
        if lam_prev is not None and abs(lam0 - lam_prev) <= tol:
            lam_prev = lam0
            break
        lam_prev = lam0
    else:
        raise NotConverged(
            f"R-schedule exhausted before tol={tol}: trace={trace}")

    w_raw = _w_from_phi(phi_prev, kappa)

    # polish against the nonlinear discrete system on a slightly smaller ball
    r_pol = max(grid_stop.radius - 1.0, 0.75 * grid_stop.radius)
    mid = grid_stop.center_index
    half = min(int(r_pol / grid_stop.h), mid - 1)
    lo, hi = mid - half, mid + half + 1
    x_sub = grid_stop.nodes[lo:hi]
    g_pol = make_grid(float(x_sub[-1]), len(x_sub))
    w_sub = Field(g_pol, w_raw.values[lo:hi])
    bdata = (float(w_sub.values[0]), float(w_sub.values[-1]))
    lam_star_val, _ = solve_level_bottom(spec, g_pol, lam_prev,
                                         boundary=bdata, init=w_sub)
    w_star = solve_dirichlet(spec, g_pol, lam_star_val, boundary=bdata,
                             init=w_sub, mu_tol=1e-8)
    return LambdaStarResult(lambda_star=lam_star_val, w_star=w_star,
                            method="spectral", kappa=kappa, r_trace=trace,
                            converged=True)


def _classify_probe(spec: ProblemSpec, lam: float, grid: Grid):
    """Solve at lam with W0 boundary data and classify; None when unsolvable."""
    from .classify import classify_solution
    try:
        sol = solve_dirichlet(spec, grid, lam)
    except NoConvergence:
        return None, None
    return classify_solution(spec, sol), sol


def lambda_star_bisect(spec: ProblemSpec, bracket, tol: float = 1e-2,
                       R: float = DEFAULT_RADIUS,
                       n: int = DEFAULT_N) -> LambdaStarResult:
    """Classification bisection on Lambda: heuristic fallback for general ahat.

    The lower end must fail to solve or classify ergodic; the upper end must
    classify transient.  The flip point approximates the critical value; the
    paper's dichotomy holds for exact solutions, so the result is flagged
    heuristic.
    """
    grid = make_grid(R, n)
    lo, hi = float(bracket[0]), float(bracket[1])
    cls_lo, sol_lo = _classify_probe(spec, lo, grid)
    cls_hi, sol_hi = _classify_probe(spec, hi, grid)
    lo_ok = cls_lo is None or cls_lo.verdict != "transient"
    hi_ok = cls_hi is not None and cls_hi.verdict == "transient"
    if not (lo_ok and hi_ok):
        raise BadBracket(
            f"need lo failing-or-ergodic and hi transient; got "
            f"lo={'unsolvable' if cls_lo is None else cls_lo.verdict}, "
            f"hi={'unsolvable' if cls_hi is None else cls_hi.verdict}")
    best_ergodic = sol_lo if (cls_lo is not None
                              and cls_lo.verdict == "ergodic") else None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cls, sol = _classify_probe(spec, mid, grid)
        if cls is not None and cls.verdict == "transient":
            hi = mid
        else:
            lo = mid
            if cls is not None and cls.verdict == "ergodic":
                best_ergodic = sol
    lam_est = 0.5 * (lo + hi)
    w_star = best_ergodic
    if w_star is None:
        try:
            w_star = solve_dirichlet(spec, grid, hi)
        except NoConvergence as exc:
            raise NotConverged(f"no representative solution near the flip "
                               f"point: {exc}") from exc
    return LambdaStarResult(lambda_star=lam_est, w_star=w_star,
                            method="bisection", kappa=None, r_trace=[],
                            converged=True, heuristic=True)


def _bisect_auto(spec: ProblemSpec, R: float, n: int) -> LambdaStarResult:
    """Bracket construction for the bisection fallback.

    Centers the bracket on the critical value of the proportional surrogate
    (ahat replaced by its median multiple of a) and widens on demand.
    """
    x = np.linspace(-R, R, 512)
    kbar = float(np.median(eval_coeff(spec.ahat, x, 0)
                           / eval_coeff(spec.a, x, 0)))
    surrogate = ProblemSpec(kind="pde1d", a=spec.a,
                            ahat=spec.a.scaled(kbar), b=spec.b,
                            v0=spec.v0, vbar=spec.vbar, w0=spec.w0,
                            domain_radius_default=spec.domain_radius_default)
    center = lambda_star(surrogate, R=R, n=n).lambda_star
    half = 0.5
    last_err = None
    for _ in range(4):
        try:
            return lambda_star_bisect(spec, (center - half, center + half),
                                      R=R, n=n)
        except BadBracket as exc:
            last_err = exc
            half *= 2.0
    raise BadBracket(f"could not bracket the critical value: {last_err}")
