"""Matrix factorizations and constrained least squares.

SVD, QR and the pseudoinverse are thin wrappers over LAPACK (deterministic
for a given input).  The nonnegative least-squares solver is an active-set
method in the Lawson-Hanson style, implemented here because its exact
behaviour (dual tolerance, iteration cap, exact zeros in the solution) is
part of this package's contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import _as_matrix


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before converging."""


@dataclass
class SvdResult:
    u: np.ndarray  # orthonormal columns
    s: np.ndarray  # singular values, descending, >= 0
    v: np.ndarray  # orthonormal columns; u @ diag(s) @ v.T reconstructs


@dataclass
class QrResult:
    q: np.ndarray  # orthonormal columns
    r: np.ndarray  # upper triangular


def svd(m) -> SvdResult:
    """Thin singular value decomposition."""
    m = _as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input has non-finite entries")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return SvdResult(u=u, s=s, v=vh.T)


def default_pinv_tol(m, s_max: float) -> float:
    m = np.asarray(m)
    return max(m.shape) * np.finfo(np.float64).eps * s_max


def pinv(m, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below `tol` are dropped.

    Default tol is max(rows, cols) * machine epsilon * largest singular value.
    """
    m = _as_matrix(m)
    res = svd(m)
    s_max = float(res.s[0]) if res.s.size else 0.0
    if tol is None:
        tol = default_pinv_tol(m, s_max)
    elif tol < 0:
        raise ValueError("tol must be nonnegative")
    inv = np.where(res.s > tol, np.divide(1.0, res.s, where=res.s > 0), 0.0)
    return (res.v * inv) @ res.u.T


def qr(m) -> QrResult:
    """Thin QR factorization; requires rows >= cols."""
    m = _as_matrix(m)
    if m.shape[0] < m.shape[1]:
        raise ValueError(f"qr needs rows >= cols, got shape {m.shape}")
    q, r = np.linalg.qr(m, mode="reduced")
    return QrResult(q=q, r=r)


def nnls(a, y, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Solve min ||a x - y||_2 subject to x >= 0.

    Lawson-Hanson active-set iteration: grow the passive (positive) set by
    the most violated dual coordinate, solve the unconstrained LS problem on
    that set, and step back toward feasibility when the subproblem solution
    leaves the nonnegative orthant.  Inactive coordinates are exact zeros.
    `tol` is the dual feasibility threshold; a coordinate whose admission
    makes no numerical progress is shelved until the iterate next moves,
    which keeps near-degenerate problems from cycling.  The iteration cap
    defaults to 10 * cols admissions.
    """
    a = _as_matrix(a, "a")
    y = np.asarray(y, dtype=np.float64).ravel()
    m, n = a.shape
    if y.size != m:
        raise ValueError(f"a has {m} rows but y has {y.size} entries")
    if max_iter is None:
        max_iter = max(30, 10 * n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    outer = 0
    while True:
        w = a.T @ (y - a @ x)
        candidates = ~passive & ~blocked & (w > tol)
        if not candidates.any():
            break
        outer += 1
        if outer > max_iter:
            raise ConvergenceError(
                f"nnls failed to converge within {max_iter} iterations "
                f"(likely an ill-conditioned design matrix)"
            )
        j = int(np.flatnonzero(candidates)[np.argmax(w[candidates])])
        passive[j] = True
        x_before = x.copy()
        inner = 0
        while True:
            z = np.zeros(n)
            z[passive], *_ = np.linalg.lstsq(a[:, passive], y, rcond=None)
            if np.all(z[passive] > 0.0):
                x = z
                break
            inner += 1
            if inner > 3 * n:
                raise ConvergenceError(
                    "nnls feasibility restoration failed to settle"
                )
            # step from x toward z, stopping at the first coordinate to hit 0
            mask = passive & (z <= 0.0)
            denom = x[mask] - z[mask]
            steps = np.divide(x[mask], denom, out=np.zeros_like(denom),
                              where=denom > 0.0)
            alpha = float(np.min(steps))
            x = x + alpha * (z - x)
            drop = passive & (x <= tol)
            x[drop] = 0.0
            passive &= ~drop
            if not passive.any():
                x = np.zeros(n)
                break
        if np.array_equal(x, x_before):
            # admission of j went nowhere; shelve it until x moves
            passive[j] = False
            x[j] = 0.0
            blocked[j] = True
        else:
            blocked[:] = False
    return x


def nnls_multi(a, ys, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Column-wise nnls: column j of the result solves for ys[:, j]."""
    a = _as_matrix(a, "a")
    ys = _as_matrix(ys, "ys")
    if ys.shape[0] != a.shape[0]:
        raise ValueError(f"a has {a.shape[0]} rows but ys has {ys.shape[0]}")
    out = np.empty((a.shape[1], ys.shape[1]))
    for j in range(ys.shape[1]):
        out[:, j] = nnls(a, ys[:, j], tol=tol, max_iter=max_iter)
    return out
