"""Sparse direct factorizations and a matrix-free GMRES."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla


class FactorizationError(ArithmeticError):
    pass


class Factorization:
    """Sparse LU factors of a square matrix, reused for many right-hand sides.

    With ``symmetric=True`` the ordering is symmetric (minimum degree on
    ``A^T + A``) and no row interchanges are allowed, so the diagonal of
    ``U`` holds the pivots of an ``LDL^T``-like elimination; every pivot is
    required to be positive.
    """

    def __init__(self, A, symmetric: bool = False):
        A = sps.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise FactorizationError(f"matrix must be square, got shape {A.shape}")
        self.shape = A.shape
        self.symmetric = symmetric
        try:
            if symmetric:
                self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                     options=dict(SymmetricMode=True))
            else:
                self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            row = _singular_row(A, symmetric)
            where = f" at row {row}" if row is not None else ""
            raise FactorizationError(f"singular pivot{where}: {exc}") from exc
        pivots = self._lu.U.diagonal()
        # U[j, j] is the pivot of column perm_c[j] (row perm_r[j] of A)
        bad = np.nonzero(pivots <= 0)[0] if symmetric else np.nonzero(pivots == 0)[0]
        if len(bad):
            row = int(np.argsort(self._lu.perm_r)[bad[0]])
            kind = "nonpositive" if symmetric else "zero"
            raise FactorizationError(f"{kind} pivot {pivots[bad[0]]:.3e} at row {row}")
        self.min_pivot = float(pivots.min())

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def _singular_row(A: sps.csc_matrix, symmetric: bool) -> Optional[int]:
    """Locate the row behind an exactly singular factorization, when it can be found cheaply."""
    d = A.diagonal()
    if symmetric and np.any(d <= 0):
        return int(np.nonzero(d <= 0)[0][0])
    empty = np.nonzero(np.diff(sps.csr_matrix(A).indptr) == 0)[0]
    if len(empty):
        return int(empty[0])
    if A.shape[0] <= 2000:
        P, _, U = sla.lu(A.toarray())
        small = np.abs(np.diag(U)) <= 1e-14 * max(np.abs(U).max(), 1e-300)
        if np.any(small):
            j = int(np.nonzero(small)[0][0])
            return int(np.argmax(P[:, j]))
    return None


def factorize(A, symmetric: bool = False) -> Factorization:
    return Factorization(A, symmetric=symmetric)


@dataclass
class GmresOptions:
    rel_tol: float = 1e-6
    max_iters: int = 500
    restart: Optional[int] = None
    record_history: bool = True

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.restart is not None and self.restart < 1:
            raise ValueError("restart must be a positive integer or None")


@dataclass
class GmresResult:
    x: np.ndarray
    residuals: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    stopped_by_callback: bool = False


class _Arnoldi:
    """State of one GMRES cycle; yields the iterate after any of its steps."""

    def __init__(self, x0, z0, beta, capacity):
        self.x0 = x0
        self.V = [z0 / beta]
        self.R = np.zeros((capacity + 1, capacity))
        self.g = np.zeros(capacity + 1)
        self.g[0] = beta
        self.cs = np.zeros(capacity)
        self.sn = np.zeros(capacity)
        self.k = 0

    def step(self, w: np.ndarray) -> tuple[float, bool]:
        j = self.k
        h = np.zeros(j + 2)
        for _ in range(2):  # modified Gram-Schmidt plus one reorthogonalization pass
            for i in range(j + 1):
                c = np.dot(self.V[i], w)
                h[i] += c
                w -= c * self.V[i]
        h[j + 1] = np.linalg.norm(w)
        breakdown = h[j + 1] <= 1e-14 * max(np.abs(h[: j + 1]).max(initial=0.0), 1e-300)
        if not breakdown:
            self.V.append(w / h[j + 1])
        for i in range(j):
            t = self.cs[i] * h[i] + self.sn[i] * h[i + 1]
            h[i + 1] = -self.sn[i] * h[i] + self.cs[i] * h[i + 1]
            h[i] = t
        denom = np.hypot(h[j], h[j + 1])
        if denom == 0.0:
            self.cs[j], self.sn[j] = 1.0, 0.0
        else:
            self.cs[j], self.sn[j] = h[j] / denom, h[j + 1] / denom
        h[j] = denom
        h[j + 1] = 0.0
        self.R[: j + 1, j] = h[: j + 1]
        self.g[j + 1] = -self.sn[j] * self.g[j]
        self.g[j] = self.cs[j] * self.g[j]
        self.k = j + 1
        return abs(self.g[j + 1]), breakdown

    def iterate(self, k: int) -> np.ndarray:
        if k == 0:
            return self.x0.copy()
        y = sla.solve_triangular(self.R[:k, :k], self.g[:k])
        x = self.x0.copy()
        for i in range(k):
            x += y[i] * self.V[i]
        return x


class GmresMonitor:
    """View of a running GMRES handed to callbacks."""

    def __init__(self, solver_state: dict):
        self._s = solver_state

    @property
    def iteration(self) -> int:
        return self._s["total"]

    @property
    def residuals(self) -> list:
        return self._s["residuals"]

    @property
    def first_available(self) -> int:
        """Earliest global iteration whose iterate can still be reconstructed."""
        return self._s["cycle_start"]

    def iterate(self, k: Optional[int] = None) -> np.ndarray:
        k = self.iteration if k is None else k
        start = self._s["cycle_start"]
        if not start <= k <= self.iteration:
            raise IndexError(f"iterate {k} is not available (cycle starts at {start})")
        return self._s["cycle"].iterate(k - start)


def gmres(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
          M_inv: Optional[Callable[[np.ndarray], np.ndarray]] = None,
          opts: Optional[GmresOptions] = None, x0: Optional[np.ndarray] = None,
          callback: Optional[Callable[[GmresMonitor], object]] = None) -> GmresResult:
    """Left-preconditioned GMRES for ``M_inv(A x) = M_inv(b)``.

    ``residuals[k]`` is the relative (preconditioned) residual after ``k``
    iterations, normalized by ``|M_inv b|`` or, when ``b = 0``, by the
    initial residual.  ``callback(monitor)`` runs after every iteration; a
    truthy return value stops the iteration and the caller decides which
    iterate to keep through ``monitor.iterate``.
    """
    opts = opts or GmresOptions()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    precond = M_inv if M_inv is not None else (lambda v: v)

    def op(v):
        w = np.asarray(apply(v), dtype=float)
        if w.shape != (n,):
            raise ValueError(f"operator returned shape {w.shape}, expected ({n},)")
        w = np.asarray(precond(w), dtype=float)
        if w.shape != (n,):
            raise ValueError(f"preconditioner returned shape {w.shape}, expected ({n},)")
        return w.copy()

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    z = precond(b - apply(x)) if x0 is not None else np.asarray(precond(b), dtype=float)
    z = np.array(z, dtype=float)
    norm_b = np.linalg.norm(precond(b)) if x0 is not None else np.linalg.norm(z)
    beta = np.linalg.norm(z)
    scale = norm_b if norm_b > 0 else beta
    result = GmresResult(x=x)
    residuals = [beta / scale if scale > 0 else 0.0]
    state = {"total": 0, "residuals": residuals, "cycle_start": 0, "cycle": None}
    monitor = GmresMonitor(state)
    result.residuals = residuals

    if beta == 0.0 or residuals[0] <= opts.rel_tol:
        result.converged = True
        state["cycle"] = _Arnoldi(x, z if beta > 0 else np.ones(n), beta if beta > 0 else 1.0, 0)
        if callback is not None and callback(monitor):
            result.stopped_by_callback = True
        return result

    cycle_len = opts.restart or opts.max_iters
    while state["total"] < opts.max_iters:
        capacity = min(cycle_len, opts.max_iters - state["total"])
        cyc = _Arnoldi(x, z, beta, capacity)
        state["cycle"] = cyc
        state["cycle_start"] = state["total"]
        done = False
        for _ in range(capacity):
            res, breakdown = cyc.step(op(cyc.V[cyc.k]))
            state["total"] += 1
            residuals.append(res / scale)
            if callback is not None and callback(monitor):
                result.stopped_by_callback = True
                done = True
            if residuals[-1] <= opts.rel_tol or breakdown:
                result.converged = True
                done = True
            if done:
                break
        x = cyc.iterate(cyc.k)
        if done or state["total"] >= opts.max_iters:
            break
        z = np.array(precond(b - apply(x)), dtype=float)
        beta = np.linalg.norm(z)
        if beta == 0.0:
            result.converged = True
            break

    result.x = x
    result.n_iter = state["total"]
    if not opts.record_history:
        result.residuals = residuals[-1:]
    return result
