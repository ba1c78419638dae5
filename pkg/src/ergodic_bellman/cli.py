"""Batch command-line front end.

One command per process; every run writes summary.json (embedding the fully
resolved configuration and the toolkit version), CSV data files, and optional
SVG line plots.  Exit codes: 0 success, 1 numerical failure, 2 configuration
error.  Outputs are written atomically and are byte-identical for a fixed
configuration and seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .classify import (Inconclusive, InsufficientMass, classify_solution,
                       decay_rate, drift_of, simulate_em)
from .coefficients import CoefficientModel1D, bump
from .dirichlet import NoConvergence, solve_dirichlet
from .grid import make_grid
from .lambdastar import (BadBracket, NotConverged, PerronViolation,
                         lambda_star)
from .leqg import (ComplexRoots, NoStabilizing, SingularLinearSolve, assemble)
from .problem import (NonElliptic, ProblemSpec, UnknownProblem, builtin,
                      validate_assumptions)
from .variational import NotErgodic, duality_check, perturbation_sweep

COMMANDS = ("validate", "lambda-star", "solve", "classify", "simulate",
            "leqg", "duality", "perturb")

NUMERICAL_FAILURES = (NoConvergence, NotConverged, PerronViolation,
                      BadBracket, NotErgodic, Inconclusive, InsufficientMass,
                      NonElliptic, ComplexRoots, NoStabilizing,
                      SingularLinearSolve)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: ProblemSpec
    command: str
    R: float = 8.0
    n: int = 2001
    tol: float = 1e-6
    lam: float | None = None
    dt: float = 1e-3
    T: float = 50.0
    n_paths: int = 2000
    seed: int = 42
    plot: bool = False
    out: str = "eb_out"

    def resolved(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "problem"}
        d["problem"] = json.loads(self.problem.to_json())
        d["version"] = __version__
        return d


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ergodic-bellman",
        description="critical values, classification and duality checks for "
                    "1-D ergodic Bellman equations")
    p.add_argument("--problem", help="catalog name")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--R", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--paths", dest="n_paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", action="store_true", default=None)
    p.add_argument("--out", type=str)
    return p


def parse_config(argv=None, path: str | None = None) -> RunConfig:
    """Build a validated RunConfig from flags and/or a JSON config file."""
    merged: dict = {}
    if argv is not None:
        try:
            ns = _build_parser().parse_args(argv)
        except SystemExit as exc:
            raise ConfigError("bad command line flags") from exc
        path = ns.config or path
        flags = {k: v for k, v in vars(ns).items()
                 if k != "config" and v is not None}
    else:
        flags = {}
    if path is not None:
        try:
            with open(path) as fh:
                filedoc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(filedoc, dict):
            raise ConfigError("config file must hold a JSON object")
        merged.update(filedoc)
    merged.update(flags)

    if "command" not in merged or merged["command"] is None:
        raise ConfigError("missing required field 'command'")
    if merged["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {merged['command']!r}")
    prob = merged.get("problem")
    if prob is None:
        raise ConfigError("missing required field 'problem'")
    if isinstance(prob, str):
        try:
            spec = builtin(prob)
        except UnknownProblem as exc:
            raise ConfigError(str(exc)) from exc
    elif isinstance(prob, dict):
        try:
            spec = ProblemSpec.from_json(json.dumps(prob))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad problem document: {exc}") from exc
    else:
        raise ConfigError("'problem' must be a catalog name or a document")

    kwargs = {}
    for fname in ("R", "n", "tol", "lam", "dt", "T", "n_paths", "seed",
                  "plot", "out"):
        if fname in merged and merged[fname] is not None:
            kwargs[fname] = merged[fname]
    try:
        cfg = RunConfig(problem=spec, command=merged["command"], **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.n < 5 or cfg.n % 2 == 0:
        raise ConfigError("'n' must be an odd count >= 5")
    if cfg.R <= 0 or cfg.tol <= 0 or cfg.dt <= 0 or cfg.T <= 0:
        raise ConfigError("R, tol, dt, T must be positive")
    return cfg


def _write_atomic(path: str, data: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_summary(cfg: RunConfig, payload: dict) -> None:
    doc = {"config": cfg.resolved(), "result": payload}
    _write_atomic(os.path.join(cfg.out, "summary.json"),
                  json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _plot_lines(cfg: RunConfig, fname: str, xs, series, xlabel, ylabel):
    if not cfg.plot:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "ergodic-bellman"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series:
        ax.plot(xs, ys, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(cfg.out, fname), format="svg",
                metadata={"Date": None})
    plt.close(fig)


def _csv(path: str, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _cmd_validate(cfg: RunConfig) -> dict:
    rep = validate_assumptions(cfg.problem, window_radius=min(12.0, 1.5 * cfg.R))
    return {"nu1": rep.nu1, "nu2": rep.nu2, "mu1": rep.mu1, "mu2": rep.mu2,
            "c_low": rep.c_low, "c_high": rep.c_high,
            "passed": rep.passed, "u0_trend": rep.u0_trend, "note": rep.note}


def _cmd_lambda_star(cfg: RunConfig) -> dict:
    res = lambda_star(cfg.problem, tol=cfg.tol, R=cfg.R, n=cfg.n)
    sol = res.w_star
    _csv(os.path.join(cfg.out, "r_trace.csv"), "R,lambda0", res.r_trace)
    _write_atomic(os.path.join(cfg.out, "w_star.csv"), sol.to_csv())
    _plot_lines(cfg, "w_star.svg", sol.grid.nodes,
                [("W*", sol.w.values)], "x", "W*")
    return {"lambda_star": res.lambda_star, "method": res.method,
            "kappa": res.kappa, "converged": res.converged,
            "heuristic": res.heuristic,
            "residual_norm": sol.residual_norm}


def _solution_at(cfg: RunConfig):
    if cfg.lam is None:
        res = lambda_star(cfg.problem, tol=cfg.tol, R=cfg.R, n=cfg.n)
        return res.w_star, res.lambda_star
    grid = make_grid(cfg.R, cfg.n)
    sol = solve_dirichlet(cfg.problem, grid, cfg.lam)
    return sol, None


def _cmd_solve(cfg: RunConfig) -> dict:
    if cfg.lam is None:
        raise ConfigError("command 'solve' requires --lambda")
    sol, _ = _solution_at(cfg)
    _write_atomic(os.path.join(cfg.out, "solution.csv"), sol.to_csv())
    _plot_lines(cfg, "solution.svg", sol.grid.nodes,
                [("W", sol.w.values)], "x", "W")
    return sol.summary()


def _cmd_classify(cfg: RunConfig) -> dict:
    sol, _ = _solution_at(cfg)
    cls = classify_solution(cfg.problem, sol)
    payload = json.loads(cls.to_json())
    if cls.invariant_density is not None:
        _write_atomic(os.path.join(cfg.out, "invariant_density.csv"),
                      cls.invariant_density.to_csv())
        _plot_lines(cfg, "invariant_density.svg",
                    cls.invariant_density.grid.nodes,
                    [("density", cls.invariant_density.values)], "x", "p")
    payload["lambda"] = sol.lam
    return payload


def _cmd_simulate(cfg: RunConfig) -> dict:
    sol, _ = _solution_at(cfg)
    d = drift_of(cfg.problem, sol)
    rep = simulate_em(d, x0=0.0, T=cfg.T, dt=cfg.dt, n_paths=cfg.n_paths,
                      seed=cfg.seed)
    hist = rep.occupation_histogram
    _write_atomic(os.path.join(cfg.out, "histogram.csv"), hist.to_csv())
    _plot_lines(cfg, "histogram.svg", hist.grid.nodes,
                [("occupation mass", hist.values)], "x", "mass")
    return rep.summary()


def _cmd_leqg(cfg: RunConfig) -> dict:
    spec = cfg.problem
    if spec.kind != "leqg":
        raise ConfigError("command 'leqg' needs a problem of kind leqg")
    sol = assemble(spec.d_mat, spec.m_mat, spec.a_mat, spec.ahat_mat,
                   spec.v_vec)
    return json.loads(sol.to_json())


def _cmd_duality(cfg: RunConfig) -> dict:
    spec = cfg.problem
    rep = duality_check(spec, spec.vbar)
    return {"lambda_star_of_v": rep.lambda_star_of_v, "pairing": rep.pairing,
            "j_at_mu_star": rep.j_at_mu_star, "gap": rep.gap,
            "moment_lhs": rep.moment_lhs, "moment_rhs": rep.moment_rhs,
            "moment_ok": rep.moment_ok,
            "truncation_mass": rep.truncation_mass}


def _cmd_perturb(cfg: RunConfig) -> dict:
    seq = [bump(0.2 / n, 0.0, 0.2) for n in (1, 2, 4, 8, 16)]
    rows = perturbation_sweep(cfg.problem, seq)
    _csv(os.path.join(cfg.out, "perturbation.csv"),
         "index,lambda_star,lambda_shift,sup_distance",
         [(r["index"], r["lambda_star"], r["lambda_shift"],
           r["sup_distance"]) for r in rows])
    return {"rows": rows}


_DISPATCH = {
    "validate": _cmd_validate,
    "lambda-star": _cmd_lambda_star,
    "solve": _cmd_solve,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "leqg": _cmd_leqg,
    "duality": _cmd_duality,
    "perturb": _cmd_perturb,
}


def execute(cfg: RunConfig) -> int:
    """Run the configured command; returns the process exit status."""
    os.makedirs(cfg.out, exist_ok=True)
    try:
        payload = _DISPATCH[cfg.command](cfg)
        status = 0
    except ConfigError:
        raise
    except NUMERICAL_FAILURES as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        status = 1
    payload["status"] = status
    _write_summary(cfg, payload)
    return status


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        return execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
