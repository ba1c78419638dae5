"""Problem instances, assumption checks and the built-in catalog.

A 1-D problem is the equation

    0.5 (a W')' + 0.5 ahat (W')^2 + b W' + V0 + Vbar = Lambda

on the real line, carried here by closed-form coefficient models together with
a supersolution W0 used for Dirichlet boundary data and for the confinement
check.  LEQG instances hold the matrices of the linear-quadratic case instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientModel1D, bump, constant, eval_coeff, polynomial, zero


class NonElliptic(Exception):
    """a or ahat is not strictly positive on the sampled window."""


class UnknownProblem(KeyError):
    """Catalog lookup miss."""


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem instance; kind is 'pde1d' or 'leqg'."""

    kind: str
    # pde1d fields
    a: CoefficientModel1D = None
    ahat: CoefficientModel1D = None
    b: CoefficientModel1D = None
    v0: CoefficientModel1D = None
    vbar: CoefficientModel1D = None
    w0: CoefficientModel1D = None
    domain_radius_default: float = 8.0
    # leqg fields
    dim: int = 0
    d_mat: np.ndarray = None
    m_mat: np.ndarray = None
    a_mat: np.ndarray = None
    ahat_mat: np.ndarray = None
    v_vec: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "pde1d":
            for fname in ("a", "ahat", "b", "v0", "vbar", "w0"):
                if getattr(self, fname) is None:
                    raise ValueError(f"pde1d spec missing coefficient '{fname}'")
            for fname in ("a", "ahat"):
                coeff = getattr(self, fname)
                if any(k >= 1 and c != 0.0 for k, c in coeff.poly):
                    raise ValueError(
                        f"'{fname}' must be constant + bumps (no growing terms), "
                        "otherwise the ellipticity bounds cannot hold")
        elif self.kind == "leqg":
            for fname in ("d_mat", "m_mat", "a_mat", "ahat_mat", "v_vec"):
                if getattr(self, fname) is None:
                    raise ValueError(f"leqg spec missing '{fname}'")
            M = np.asarray(self.m_mat)
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError("M must be symmetric")
            for fname in ("a_mat", "ahat_mat"):
                S = np.asarray(getattr(self, fname))
                if not np.allclose(S, S.T, atol=1e-12):
                    raise ValueError(f"{fname} must be symmetric")
                if np.min(np.linalg.eigvalsh(S)) <= 0:
                    raise ValueError(f"{fname} must be positive-definite")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    # -- derived coefficient helpers (pde1d) --

    def b_tilde(self, x):
        """b + a'/2, the non-divergence-form drift."""
        return eval_coeff(self.b, x, 0) + 0.5 * eval_coeff(self.a, x, 1)

    def v_total(self, x):
        return eval_coeff(self.v0, x, 0) + eval_coeff(self.vbar, x, 0)

    def with_vbar(self, vbar: CoefficientModel1D) -> "ProblemSpec":
        return ProblemSpec(kind="pde1d", a=self.a, ahat=self.ahat, b=self.b,
                           v0=self.v0, vbar=vbar, w0=self.w0,
                           domain_radius_default=self.domain_radius_default,
                           name=self.name)

    def u0(self, x):
        """Confinement function U0 = -(0.5 (a W0')' + 0.5 ahat (W0')^2 + b W0' + V0)."""
        a0 = eval_coeff(self.a, x, 0)
        a1 = eval_coeff(self.a, x, 1)
        w1 = eval_coeff(self.w0, x, 1)
        w2 = eval_coeff(self.w0, x, 2)
        expr = (0.5 * (a1 * w1 + a0 * w2)
                + 0.5 * eval_coeff(self.ahat, x, 0) * w1**2
                + eval_coeff(self.b, x, 0) * w1
                + eval_coeff(self.v0, x, 0))
        return -expr

    # -- serialization --

    def to_json(self) -> str:
        if self.kind == "pde1d":
            doc = {"kind": "pde1d",
                   "domain_radius_default": self.domain_radius_default,
                   "name": self.name}
            for fname in ("a", "ahat", "b", "v0", "vbar", "w0"):
                doc[fname] = getattr(self, fname).to_dict()
        else:
            doc = {"kind": "leqg", "dim": self.dim, "name": self.name,
                   "D": np.asarray(self.d_mat).reshape(-1).tolist(),
                   "M": np.asarray(self.m_mat).reshape(-1).tolist(),
                   "a": np.asarray(self.a_mat).reshape(-1).tolist(),
                   "ahat": np.asarray(self.ahat_mat).reshape(-1).tolist(),
                   "v": np.asarray(self.v_vec).tolist()}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        doc = json.loads(text)
        kind = doc["kind"]
        if kind == "pde1d":
            kw = {f: CoefficientModel1D.from_dict(doc[f])
                  for f in ("a", "ahat", "b", "v0", "vbar", "w0")}
            return cls(kind="pde1d",
                       domain_radius_default=float(doc.get("domain_radius_default", 8.0)),
                       name=doc.get("name", ""), **kw)
        if kind == "leqg":
            n = int(doc["dim"])
            return cls(kind="leqg", dim=n, name=doc.get("name", ""),
                       d_mat=np.array(doc["D"], dtype=float).reshape(n, n),
                       m_mat=np.array(doc["M"], dtype=float).reshape(n, n),
                       a_mat=np.array(doc["a"], dtype=float).reshape(n, n),
                       ahat_mat=np.array(doc["ahat"], dtype=float).reshape(n, n),
                       v_vec=np.array(doc["v"], dtype=float))
        raise ValueError(f"unknown kind {kind!r}")


@dataclass
class AssumptionReport:
    """Ellipticity bounds, comparability constants and the confinement trend."""

    nu1: float
    nu2: float
    mu1: float
    mu2: float
    c_low: float
    c_high: float
    u0_trend: list            # per-annulus minima of U0, inner to outer
    passed_a1: bool
    passed_a2: bool
    passed_a3: bool
    window_radius: float
    note: str = "checked on a finite window, not proved at infinity"

    @property
    def passed(self) -> bool:
        return self.passed_a1 and self.passed_a2 and self.passed_a3


def validate_assumptions(spec: ProblemSpec, window_radius: float = 12.0,
                         annuli: int = 8) -> AssumptionReport:
    """Sample ellipticity/comparability bounds and the U0 -> infinity trend.

    The confinement assumption is a statement at infinity; the accepted proxy
    is that the per-annulus minimum of U0 increases over the outer half of the
    annuli covering [0, window_radius].
    """
    if spec.kind != "pde1d":
        raise ValueError("validate_assumptions applies to pde1d specs")
    x = np.linspace(-window_radius, window_radius, 4001)
    av = eval_coeff(spec.a, x, 0)
    hv = eval_coeff(spec.ahat, x, 0)
    if np.min(av) <= 0 or np.min(hv) <= 0:
        raise NonElliptic("a or ahat is nonpositive on the sampled window")
    nu1, nu2 = float(np.min(av)), float(np.max(av))
    mu1, mu2 = float(np.min(hv)), float(np.max(hv))
    ratio = hv / av
    c_low, c_high = float(np.min(ratio)), float(np.max(ratio))

    edges = np.linspace(0.0, window_radius, annuli + 1)
    minima = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs = np.linspace(lo, hi, 201)
        ring = np.concatenate([xs, -xs])
        minima.append(float(np.min(spec.u0(ring))))
    outer = minima[annuli // 2:]
    trend_ok = all(b > a for a, b in zip(outer[:-1], outer[1:]))

    return AssumptionReport(nu1=nu1, nu2=nu2, mu1=mu1, mu2=mu2,
                            c_low=c_low, c_high=c_high,
                            u0_trend=minima,
                            passed_a1=nu1 > 0, passed_a2=mu1 > 0,
                            passed_a3=trend_ok,
                            window_radius=window_radius)


def _ou_quadratic() -> ProblemSpec:
    # b = -x, V = -x^2/2: the scalar linear-quadratic case with D = M = -1.
    return ProblemSpec(kind="pde1d", name="ou-quadratic",
                       a=constant(1.0), ahat=constant(1.0),
                       b=polynomial((1, -1.0)),
                       v0=polynomial((2, -0.5)), vbar=zero(),
                       w0=zero())


def _catalog():
    return {
        "ou-quadratic": _ou_quadratic,
        "ou-bounded-v": lambda: ProblemSpec(
            kind="pde1d", name="ou-bounded-v",
            a=constant(1.0), ahat=constant(1.0),
            b=polynomial((1, -1.0)),
            v0=zero(), vbar=bump(1.0, 0.0, 1.0),
            w0=polynomial((2, 0.1))),
        "outward-drift": lambda: ProblemSpec(
            kind="pde1d", name="outward-drift",
            a=constant(1.0), ahat=constant(1.0),
            b=polynomial((1, 1.0)),
            v0=zero(), vbar=bump(0.3, 0.0, 1.0),
            w0=polynomial((2, -0.1))),
        "confining-v": lambda: ProblemSpec(
            kind="pde1d", name="confining-v",
            a=constant(1.0), ahat=constant(1.0),
            b=zero(),
            v0=polynomial((2, -1.0)), vbar=zero(),
            w0=zero()),
        "leqg-2d": lambda: ProblemSpec(
            kind="leqg", name="leqg-2d", dim=2,
            d_mat=np.diag([-1.0, -2.0]),
            m_mat=np.diag([-1.0, -4.0]),
            a_mat=np.diag([1.0, 0.5]),
            ahat_mat=np.diag([1.0, 0.5]),
            v_vec=np.array([0.3, -0.2])),
    }


def builtin(name: str) -> ProblemSpec:
    """Return a fully populated catalog problem."""
    cat = _catalog()
    if name not in cat:
        raise UnknownProblem(f"no catalog problem named {name!r}; "
                             f"have {sorted(cat)}")
    return cat[name]()


def catalog_names():
    return sorted(_catalog())
