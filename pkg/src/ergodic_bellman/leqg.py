"""Closed-form linear-quadratic solver: the toolkit's analytic oracle.

For linear drift Dx and quadratic potential x.Mx/2 + v.x the equation has
quadratic solutions W = x.Kx/2 + e.x with

    K ahat K + D^T K + K D + M = 0,
    (D^T + K ahat) e + v = 0,
    Lambda = tr(a K)/2 + e.ahat e/2,

and, for negative-definite M, a unique nonpositive-definite K making
D + ahat K stable; that branch carries the critical value.  The 1-D roots are
taken from the quadratic ahat K^2 + 2 D K + M = 0 and verified by
back-substitution (the printed closed form is ambiguous about a 1/ahat factor
inside the radical when ahat != 1; the quadratic is the ground truth).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class ComplexRoots(ValueError):
    pass


class NoStabilizing(RuntimeError):
    pass


class SingularLinearSolve(RuntimeError):
    pass


@dataclass
class LeqgSolution:
    K: np.ndarray
    e: np.ndarray
    lam: float
    stable: bool
    stability_margin: float      # -max Re eig(D + ahat K)
    riccati_residual: float
    linear_residual: float

    def to_json(self) -> str:
        return json.dumps({"K": np.asarray(self.K).tolist(),
                           "e": np.asarray(self.e).tolist(),
                           "lambda": self.lam,
                           "stable": self.stable,
                           "stability_margin": self.stability_margin},
                          sort_keys=True)


def riccati_roots_1d(D: float, M: float, a: float, ahat: float):
    """Both roots (K_minus, K_plus) of ahat K^2 + 2 D K + M = 0."""
    disc = D * D - ahat * M
    if disc < 0:
        raise ComplexRoots(f"discriminant D^2 - ahat*M = {disc} < 0")
    root = math.sqrt(disc)
    k_minus = (-D - root) / ahat
    k_plus = (-D + root) / ahat
    for k in (k_minus, k_plus):
        scale = abs(ahat * k * k) + abs(2 * D * k) + abs(M) + 1.0
        if abs(ahat * k * k + 2 * D * k + M) > 1e-10 * scale:
            raise ArithmeticError("root fails back-substitution")
    return k_minus, k_plus


def riccati_stabilizing_nd(D, M, ahat) -> np.ndarray:
    """Stabilizing nonpositive-definite root via the Hamiltonian subspace.

    Stacks the stable invariant subspace of [[D, ahat], [-M, -D^T]] as
    [U; V] and returns K = V U^{-1}, symmetrized.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    ahat = np.atleast_2d(np.asarray(ahat, dtype=float))
    n = D.shape[0]
    ham = np.block([[D, ahat], [-M, -D.T]])
    w, vecs = np.linalg.eig(ham)
    idx = np.where(w.real < 0)[0]
    if len(idx) != n:
        raise NoStabilizing(
            f"stable subspace has dimension {len(idx)} != {n}")
    U = vecs[:n, idx]
    V = vecs[n:, idx]
    if abs(np.linalg.det(U)) < 1e-12:
        raise NoStabilizing("singular top block of the stable subspace")
    K = V @ np.linalg.inv(U)
    if np.max(np.abs(K.imag)) > 1e-8 * (1.0 + np.max(np.abs(K.real))):
        raise NoStabilizing("stable subspace produced a non-real K")
    K = K.real
    K = 0.5 * (K + K.T)
    resid = K @ ahat @ K + D.T @ K + K @ D + M
    if np.max(np.abs(resid)) > 1e-10 * (1.0 + np.max(np.abs(K))**2):
        raise NoStabilizing("Riccati residual too large")
    if np.max(np.linalg.eigvalsh(K)) > 1e-8:
        raise NoStabilizing("K is not nonpositive-definite")
    if np.max(np.linalg.eigvals(D + ahat @ K).real) >= 0:
        raise NoStabilizing("D + ahat K is not stable")
    return K


def assemble(D, M, a, ahat, v) -> LeqgSolution:
    """Stabilizing K, the e vector and Lambda = tr(aK)/2 + e.ahat e/2."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    ahat = np.atleast_2d(np.asarray(ahat, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    K = riccati_stabilizing_nd(D, M, ahat)
    A = D.T + K @ ahat
    try:
        e = np.linalg.solve(A, -v)
    except np.linalg.LinAlgError as exc:
        raise SingularLinearSolve(str(exc)) from exc
    if np.linalg.cond(A) > 1e12:
        raise SingularLinearSolve("D^T + K ahat is numerically singular")
    lam = 0.5 * float(np.trace(a @ K)) + 0.5 * float(e @ ahat @ e)
    ric = float(np.max(np.abs(K @ ahat @ K + D.T @ K + K @ D + M)))
    lin = float(np.max(np.abs(A @ e + v)))
    eigs = np.linalg.eigvals(D + ahat @ K)
    margin = -float(np.max(eigs.real))
    return LeqgSolution(K=K, e=e, lam=lam, stable=margin > 0,
                        stability_margin=margin,
                        riccati_residual=ric, linear_residual=lin)
