"""Classification and simulation of the diffusion induced by a solution.

A solution (W, Lambda) induces the one-dimensional diffusion

    dX = (bt(X) + ahat(X) W'(X)) dt + sqrt(a(X)) dB.

Recurrence is decided by the classical scale/speed test.  Divergence of the
improper integrals cannot be certified numerically, so the verdict combines
numeric growth of the scale density on the probe window with the analytic
sign of the drift tail taken from the coefficient models and the fitted
quadratic tail of W; disagreement is reported as Inconclusive rather than
guessed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import eval_coeff
from .dirichlet import GridSolution
from .grid import Field, Grid, d1
from .problem import ProblemSpec, validate_assumptions

ERGODIC = "ergodic"
NULL_RECURRENT = "null-recurrent"
TRANSIENT = "transient"


class Inconclusive(RuntimeError):
    """Numeric and analytic tail evidence disagree."""


class InsufficientMass(RuntimeError):
    pass


class NonPositiveTest(ValueError):
    pass


@dataclass
class DriftField:
    """Drift m = bt + ahat W' on a grid, plus tail data for |x| beyond it.

    tail_exponents holds the leading polynomial behavior of m on each side as
    (degree, coefficient); w_tail holds the fitted quadratic coefficients
    (K, e) of W per side used to extend the drift beyond the grid.
    """

    grid: Grid
    m: Field
    a: Field
    tail_exponents: dict
    w_tail: dict = field(default_factory=dict)
    spec: ProblemSpec | None = None

    def a_at(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        if self.spec is not None:
            out = eval_coeff(self.spec.a, xa, 0)
        else:
            out = np.interp(np.clip(xa, -self.grid.radius, self.grid.radius),
                            self.grid.nodes, self.a.values)
        return float(out[0]) if np.isscalar(x) else out

    def m_at(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.interp(xa, self.grid.nodes, self.m.values)
        R = self.grid.radius
        for side, mask in (("left", xa < -R), ("right", xa > R)):
            if not np.any(mask):
                continue
            xs = xa[mask]
            if self.spec is not None and side in self.w_tail:
                K, e = self.w_tail[side]
                ext = (self.spec.b_tilde(xs)
                       + eval_coeff(self.spec.ahat, xs, 0) * (2 * K * xs + e))
            else:
                deg, coef = self.tail_exponents[side]
                ext = coef * xs**deg
            out[mask] = ext
        return float(out[0]) if np.isscalar(x) else out


@dataclass
class Classification:
    verdict: str
    scale_left: str              # "diverges" | "converges"
    scale_right: str
    speed_mass: float            # may be inf
    invariant_density: Field | None = None

    def to_json(self) -> str:
        return json.dumps({"verdict": self.verdict,
                           "scale_left": self.scale_left,
                           "scale_right": self.scale_right,
                           "speed_mass": (None if math.isinf(self.speed_mass)
                                          else self.speed_mass)},
                          sort_keys=True)


@dataclass
class SimulationReport:
    n_paths: int
    dt: float
    horizon: float
    seed: int
    exit_fraction: dict
    occupation_histogram: Field
    killed_fraction: float

    def summary(self) -> dict:
        return {"n_paths": self.n_paths, "dt": self.dt, "horizon": self.horizon,
                "seed": self.seed,
                "exit_fraction": {str(k): v for k, v in self.exit_fraction.items()},
                "killed_fraction": self.killed_fraction}


def linear_drift(grid: Grid, slope: float, a_value: float = 1.0,
                 intercept: float = 0.0) -> DriftField:
    """DriftField for m = slope*x + intercept with constant diffusion."""
    x = grid.nodes
    m = slope * x + intercept
    deg, coef = (1, slope) if slope != 0.0 else (0, intercept)
    tails = {"left": (deg, coef), "right": (deg, coef)}
    return DriftField(grid=grid, m=Field(grid, m),
                      a=Field(grid, np.full(grid.n, a_value)),
                      tail_exponents=tails)


def _side_tail(spec: ProblemSpec, K: float, e: float, side: str):
    """Leading (degree, coefficient) of bt + ahat*(2Kx + e) on one side."""
    deg_b, coef_b = spec.b.leading_term()
    ahat_inf = spec.ahat.constant + sum(c for k, c in spec.ahat.poly if k == 0)
    merged = {0: ahat_inf * e, 1: 2.0 * ahat_inf * K}
    merged[deg_b] = merged.get(deg_b, 0.0) + coef_b
    for deg in sorted(merged, reverse=True):
        if abs(merged[deg]) > 1e-10:
            return deg, merged[deg]
    return 0, 0.0


def drift_of(spec: ProblemSpec, sol: GridSolution) -> DriftField:
    """Induced drift bt + ahat W' with per-side quadratic tail fits of W."""
    grid = sol.grid
    x = grid.nodes
    dw = d1(sol.w).values
    m = spec.b_tilde(x) + eval_coeff(spec.ahat, x, 0) * dw
    a = eval_coeff(spec.a, x, 0)
    w_tail = {}
    tails = {}
    for side, mask in (("left", x <= -0.8 * grid.radius),
                       ("right", x >= 0.8 * grid.radius)):
        xs = x[mask]
        A = np.vstack([xs**2, xs, np.ones(len(xs))]).T
        coef, *_ = np.linalg.lstsq(A, sol.w.values[mask], rcond=None)
        K, e = float(coef[0]), float(coef[1])
        w_tail[side] = (K, e)
        tails[side] = _side_tail(spec, K, e, side)
    return DriftField(grid=grid, m=Field(grid, m), a=Field(grid, a),
                      tail_exponents=tails, w_tail=w_tail, spec=spec)


def _log_scale_density(d: DriftField):
    """log s'(x) = -int_0^x 2m/a on the grid nodes."""
    x = d.grid.nodes
    q = 2.0 * d.m.values / d.a.values
    h = d.grid.h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * h)])
    cum -= cum[d.grid.center_index]
    return -cum


def _shell_integral(logf: np.ndarray, x: np.ndarray, lo: float, hi: float):
    mask = (np.abs(x) >= lo) & (np.abs(x) <= hi) & (x * np.sign(hi) >= 0)
    return mask


def _side_evidence(logsp: np.ndarray, x: np.ndarray, probe: float, side: int):
    """Numeric growth evidence for the scale integral on one side.

    Compares shell integrals of s' over [0.6p, 0.8p] and [0.8p, p]; growing
    shells support divergence, collapsing shells support convergence.
    """
    def shell(lo, hi):
        if side > 0:
            mask = (x >= lo) & (x <= hi)
        else:
            mask = (x <= -lo) & (x >= -hi)
        ls = logsp[mask]
        if len(ls) < 2:
            return -np.inf
        mx = np.max(ls)
        return mx + np.log(np.trapezoid(np.exp(ls - mx),
                                        dx=x[1] - x[0]))
    inner = shell(0.6 * probe, 0.8 * probe)
    outer = shell(0.8 * probe, probe)
    if outer > inner + np.log(1.2):
        return "diverges"
    if outer < inner + np.log(0.8):
        return "converges"
    return "neutral"


def scale_classify(d: DriftField, probe_radius: float) -> Classification:
    """Scale/speed recurrence test with analytic tails and numeric backing."""
    if probe_radius > d.grid.radius + 1e-9:
        raise ValueError("probe_radius exceeds the grid radius")
    x = d.grid.nodes
    logsp = _log_scale_density(d)

    sides = {}
    for side, name in ((1, "right"), (-1, "left")):
        xfar = side * max(2.0 * probe_radius, d.grid.radius + 5.0, 10.0)
        mfar = float(d.m_at(xfar))
        if abs(mfar) <= 1e-8 * (1.0 + abs(xfar)):
            analytic = "diverges"       # vanishing drift: Brownian-like
            null_side = True
        else:
            inward = (mfar < 0) if side > 0 else (mfar > 0)
            analytic = "diverges" if inward else "converges"
            null_side = False
        numeric = _side_evidence(logsp, x, probe_radius, side)
        if numeric != "neutral" and numeric != analytic:
            raise Inconclusive(
                f"{name} tail: analytic sign says {analytic} but numeric "
                f"growth on the probe window says {numeric}")
        sides[name] = (analytic, null_side)

    both_diverge = all(v[0] == "diverges" for v in sides.values())
    any_null = any(v[1] for v in sides.values())
    speed_finite = both_diverge and not any_null
    if speed_finite:
        log_speed = np.log(2.0 / d.a.values) - logsp
        mx = np.max(log_speed)
        speed_mass = float(np.exp(mx) * np.trapezoid(np.exp(log_speed - mx), x))
    else:
        speed_mass = float("inf")

    density = None
    if both_diverge and speed_finite:
        verdict = ERGODIC
        log_p = np.log(2.0 / d.a.values) - logsp
        log_p -= np.max(log_p)
        p = np.exp(log_p)
        p /= np.trapezoid(p, x)
        density = Field(d.grid, p)
    elif both_diverge:
        verdict = NULL_RECURRENT
    else:
        verdict = TRANSIENT
    return Classification(verdict=verdict,
                          scale_left=sides["left"][0],
                          scale_right=sides["right"][0],
                          speed_mass=speed_mass,
                          invariant_density=density)


def classify_solution(spec: ProblemSpec, sol: GridSolution) -> Classification:
    return scale_classify(drift_of(spec, sol), 0.8 * sol.grid.radius)


def _run_paths(d: DriftField, x0: float, T: float, dt: float, n_paths: int,
               seed: int, snapshot_times=(), collect_hist: bool = False,
               hist_radius: float = 4.0, hist_n: int = 161,
               time_chunk: int = 2000):
    """Euler-Maruyama engine with per-path counter-based streams.

    Paths are killed on leaving [-4R, 4R].  Returns final state, snapshots of
    (positions, alive) at the requested times, and an occupation histogram.
    """
    nsteps = int(round(T / dt))
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    kill = 4.0 * d.grid.radius
    streams = [np.random.Generator(np.random.Philox(s))
               for s in np.random.SeedSequence(seed).spawn(n_paths)]
    X = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    ever_outside = {}
    sdt = math.sqrt(dt)
    edges = np.linspace(-hist_radius, hist_radius, hist_n + 1)
    hist = np.zeros(hist_n)
    snapshots = {}
    const_a = float(np.max(d.a.values)) == float(np.min(d.a.values))
    sigma0 = math.sqrt(float(d.a.values[0])) if const_a else None
    exit_state = {}
    step = 0
    while step < nsteps:
        csize = min(time_chunk, nsteps - step)
        Z = np.empty((n_paths, csize))
        for j, g in enumerate(streams):
            Z[j, :] = g.standard_normal(csize)
        pos_buf = np.empty((csize, n_paths)) if collect_hist else None
        alive_buf = (np.empty((csize, n_paths), dtype=bool)
                     if collect_hist else None)
        for k in range(csize):
            step += 1
            drift = d.m_at(X)
            if const_a:
                noise = sigma0 * sdt * Z[:, k]
            else:
                noise = np.sqrt(d.a_at(X)) * sdt * Z[:, k]
            X = np.where(alive, X + drift * dt + noise, X)
            alive &= np.abs(X) < kill
            if collect_hist:
                pos_buf[k] = X
                alive_buf[k] = alive
            if step in snap_steps:
                snapshots[snap_steps[step]] = (X.copy(), alive.copy())
        if collect_hist:
            inside = alive_buf & (np.abs(pos_buf) <= hist_radius)
            hh, _ = np.histogram(pos_buf[inside], bins=edges)
            hist += hh
    hist_mass = hist / float(n_paths * nsteps)
    return X, alive, snapshots, hist_mass, edges


def simulate_em(d: DriftField, x0: float, T: float, dt: float, n_paths: int,
                seed: int, exit_radii=(2.0, 5.0, 10.0),
                hist_radius: float = 4.0, hist_n: int = 161) -> SimulationReport:
    """Simulate the induced diffusion; see the engine for killing and RNG.

    The occupation histogram stores time mass per node cell, so its sum is
    the fraction of path time spent inside the window.  A path counts toward
    exit_fraction(r) when it is outside [-r, r] (or killed) at the horizon.
    """
    if hist_n % 2 == 0:
        raise ValueError("hist_n must be odd")
    X, alive, _, hist_mass, edges = _run_paths(
        d, x0, T, dt, n_paths, seed, collect_hist=True,
        hist_radius=hist_radius, hist_n=hist_n)
    # node-centered field over the histogram window
    centers = 0.5 * (edges[1:] + edges[:-1])
    ngrid = Grid(float(0.5 * (centers[-1] - centers[0])), len(centers))
    occupancy = Field(ngrid, hist_mass)
    exits = {float(r): float(np.mean(~alive | (np.abs(X) > r)))
             for r in exit_radii}
    return SimulationReport(n_paths=n_paths, dt=dt, horizon=T, seed=seed,
                            exit_fraction=exits,
                            occupation_histogram=occupancy,
                            killed_fraction=float(np.mean(~alive)))


@dataclass
class DecayReport:
    rho: float
    times: list
    estimates: list
    hits: list
    lam_gap: float
    c_low: float

    @property
    def lower_bound(self) -> float:
        return self.c_low * self.lam_gap


def decay_rate(spec: ProblemSpec, sol: GridSolution, lambda_star: float,
               f_support, x0: float, T_grid, n_paths: int = 10000,
               dt: float = 1e-3, seed: int = 42) -> DecayReport:
    """Monte Carlo fit of the semigroup decay rate for f = 1_[f_support].

    Estimates E_x[f(X_t); alive] on T_grid, fits a log-linear decay through
    the points with at least 10 hits, and reports the rate together with the
    comparability constant c_low and the level gap Lambda - Lambda*.
    """
    d = drift_of(spec, sol)
    lo, hi = float(f_support[0]), float(f_support[1])
    T_grid = sorted(float(t) for t in T_grid)
    _, _, snaps, _, _ = _run_paths(d, x0, max(T_grid), dt, n_paths, seed,
                                   snapshot_times=T_grid)
    times, ests, hits = [], [], []
    for t in T_grid:
        X, alive = snaps[t]
        c = int(np.sum(alive & (X >= lo) & (X <= hi)))
        hits.append(c)
        if c >= 10:
            times.append(t)
            ests.append(c / n_paths)
    if len(times) < 2:
        raise InsufficientMass(
            f"fewer than two time points reached 10 hits: hits={hits}")
    A = np.vstack([np.ones(len(times)), -np.array(times)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ests), rcond=None)
    rep = validate_assumptions(spec)
    return DecayReport(rho=float(coef[1]), times=times, estimates=ests,
                       hits=hits, lam_gap=sol.lam - lambda_star,
                       c_low=rep.c_low)


def rate_functional_lower(d: DriftField, mu, test_family) -> float:
    """max over the family of -int (Lu/u) dmu, a lower bound for the rate
    functional; exactly 0 is attained by invariant measures via the constant
    test, which the family must contain."""
    dens = getattr(mu, "density", mu)
    vals = dens.values if isinstance(dens, Field) else np.asarray(dens)
    x = d.grid.nodes
    h = d.grid.h
    if not test_family:
        raise ValueError("empty test family")
    has_const = False
    best = -np.inf
    for u in test_family:
        uv = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
        if np.any(uv <= 0):
            raise NonPositiveTest("test functions must be strictly positive")
        if np.max(uv) - np.min(uv) <= 1e-14 * np.max(uv):
            has_const = True
        lu = np.zeros_like(uv)
        lu[1:-1] = (0.5 * d.a.values[1:-1]
                    * (uv[2:] - 2 * uv[1:-1] + uv[:-2]) / h**2
                    + d.m.values[1:-1] * (uv[2:] - uv[:-2]) / (2 * h))
        ratio = lu / uv
        ratio[0], ratio[-1] = ratio[1], ratio[-2]
        best = max(best, float(-np.trapezoid(ratio * vals, x)))
    if not has_const:
        raise ValueError("test family must include a constant function")
    return best
