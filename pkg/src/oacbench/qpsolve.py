"""Dense strictly-convex quadratic programming for velocity-level control.

Problems have the shape

    minimize    0.5 x^T H x + f^T x
    subject to  A x <= b           (general inequality rows)
                b_l <= x <= b_u    (box bounds)

``solve`` runs a dual active-set method: start at the unconstrained minimum
of the regularised objective, repeatedly pull the most violated constraint
into the active set, and take dual steps (dropping blocking constraints)
until everything is satisfied.  The active set stays linearly independent
throughout, every linear solve is against the regularised Hessian, and the
iteration order is fully deterministic, so identical inputs give bit
identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_REGULARIZATION = 1e-9
DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 200

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class QuadraticProgram:
    """One QP instance.  ``A``/``b`` may be empty; bounds may be +-inf."""

    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray
    b_l: np.ndarray
    b_u: np.ndarray

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        n = self.n
        if self.H.shape != (n, n):
            raise ValueError(f"H must be ({n}, {n}), got {self.H.shape}")
        if not np.all(np.isfinite(self.H)) or not np.all(np.isfinite(self.f)):
            raise ValueError("H and f must be finite")
        sym_err = float(np.max(np.abs(self.H - self.H.T))) if n else 0.0
        if sym_err > 1e-12 * max(1.0, float(np.max(np.abs(self.H))) if n else 1.0):
            raise ValueError(f"H must be symmetric (asymmetry {sym_err:.3e})")
        if self.A.ndim != 2 or self.A.shape[1] != n:
            raise ValueError(f"A must have {n} columns, got shape {self.A.shape}")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("b length must match the number of rows of A")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.b)):
            raise ValueError("A and b must be finite")
        if self.b_l.shape != (n,) or self.b_u.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(np.isnan(self.b_l)) or np.any(np.isnan(self.b_u)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.b_l > self.b_u):
            raise ValueError("bounds must satisfy b_l <= b_u elementwise")


def make_qp(H, f, A=None, b=None, b_l=None, b_u=None) -> QuadraticProgram:
    """Assemble and validate a QuadraticProgram from array-likes."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    H = np.asarray(H, dtype=float)
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    b_l = np.full(n, -np.inf) if b_l is None else np.asarray(b_l, dtype=float)
    b_u = np.full(n, np.inf) if b_u is None else np.asarray(b_u, dtype=float)
    qp = QuadraticProgram(H=H, f=f, A=A, b=b, b_l=b_l, b_u=b_u)
    qp.validate()
    return qp


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    row_multipliers: np.ndarray     # one per row of A
    lower_multipliers: np.ndarray   # one per variable
    upper_multipliers: np.ndarray   # one per variable


def velocity_bounds(q, q_lower, q_upper, qd_lower, qd_upper) -> tuple[np.ndarray, np.ndarray]:
    """Box bounds on joint velocity that freeze motion past a position limit.

    At or beyond the upper position limit the upper velocity bound is exactly
    0.0 (and symmetrically for the lower limit), so an out-of-range joint can
    only move back into range.
    """
    q = np.asarray(q, dtype=float)
    lo = np.where(q <= q_lower, 0.0, np.asarray(qd_lower, dtype=float))
    hi = np.where(q >= q_upper, 0.0, np.asarray(qd_upper, dtype=float))
    return lo, hi


def build_qp(n: int, tracking=(), ridge=(), rows=(), b_l=None, b_u=None) -> QuadraticProgram:
    """Assemble the controller QP.

    tracking: iterable of (J, xd) pairs; each adds the squared task-velocity
        error 0.5 * ||xd - J x||^2, i.e. J^T J to H and -J^T xd to f.
    ridge: iterable of (weight, target) pairs; each adds
        0.5 * weight * ||x - target||^2 (target None means zero).  Pairs with
        weight exactly 0.0 are skipped so they cannot perturb the problem.
    rows: iterable of (a, ub) inequality rows a . x <= ub.
    """
    H = np.zeros((n, n))
    f = np.zeros(n)
    for J, xd in tracking:
        J = np.asarray(J, dtype=float).reshape(-1, n)
        xd = np.asarray(xd, dtype=float).reshape(-1)
        if xd.shape[0] != J.shape[0]:
            raise ValueError("task velocity length must match task Jacobian rows")
        H += J.T @ J
        f -= J.T @ xd
    for weight, target in ridge:
        weight = float(weight)
        if weight < 0.0:
            raise ValueError("ridge weight must be non-negative")
        if weight == 0.0:
            continue
        H[np.diag_indices(n)] += weight
        if target is not None:
            f -= weight * np.asarray(target, dtype=float).reshape(n)
    A_rows = []
    ubs = []
    for a, ub in rows:
        A_rows.append(np.asarray(a, dtype=float).reshape(n))
        ubs.append(float(ub))
    A = np.asarray(A_rows, dtype=float).reshape(-1, n)
    b = np.asarray(ubs, dtype=float)
    return make_qp(H, f, A, b, b_l, b_u)


def _stack_constraints(qp: QuadraticProgram):
    """All constraints as rows g . x <= h, with provenance for multipliers.

    kinds[i] is (0, row_index) for A rows, (1, var) for upper bounds and
    (2, var) for lower bounds.  Infinite bounds are skipped.
    """
    n = qp.n
    rows = [qp.A]
    hs = [qp.b]
    kinds = [(0, i) for i in range(qp.n_rows)]
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(qp.b_u[j]):
            rows.append(eye[j:j + 1])
            hs.append(np.array([qp.b_u[j]]))
            kinds.append((1, j))
    for j in range(n):
        if np.isfinite(qp.b_l[j]):
            rows.append(-eye[j:j + 1])
            hs.append(np.array([-qp.b_l[j]]))
            kinds.append((2, j))
    G = np.vstack(rows) if rows else np.zeros((0, n))
    h = np.concatenate(hs) if hs else np.zeros(0)
    return G, h, kinds


def _kkt_residuals(qp, G, h, x, lam):
    primal = float(max(0.0, np.max(G @ x - h))) if G.shape[0] else 0.0
    grad = qp.H @ x + qp.f
    if G.shape[0]:
        grad = grad + G.T @ lam
    dual = float(np.max(np.abs(grad))) if grad.size else 0.0
    comp = float(np.max(np.abs(lam * (G @ x - h)))) if G.shape[0] else 0.0
    return primal, max(dual, comp)


def solve(qp: QuadraticProgram, tol: float = DEFAULT_TOLERANCE,
          max_iterations: int = DEFAULT_MAX_ITERATIONS,
          regularization: float = DEFAULT_REGULARIZATION) -> QPSolution:
    """Solve the QP; see the module docstring for the method."""
    qp.validate()
    n = qp.n
    Hc = qp.H + regularization * np.eye(n)
    try:
        L = np.linalg.cholesky(Hc)
    except np.linalg.LinAlgError as exc:
        raise ValueError("H is not positive definite after regularization") from exc

    def h_solve(v):
        # Hc^-1 v via the Cholesky factor
        y = np.linalg.solve(L, v)
        return np.linalg.solve(L.T, y)

    G, h, kinds = _stack_constraints(qp)
    m_all = G.shape[0]

    x = h_solve(-qp.f)
    active: list[int] = []
    u = np.zeros(0)
    iterations = 0
    status = STATUS_OPTIMAL

    while True:
        slack = G @ x - h if m_all else np.zeros(0)
        if m_all == 0 or np.max(slack) <= tol:
            break
        p = int(np.argmax(slack))           # most violated; ties -> lowest index
        c_p = -G[p]                         # constraint as c_p . x >= d_p
        d_p = -h[p]
        u_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iterations:
                status = STATUS_MAX_ITERATIONS
                break
            hc_cp = h_solve(c_p)
            if active:
                N = -G[active]              # active rows in >= form
                HinvNT = np.column_stack([h_solve(N[k]) for k in range(len(active))])
                r = np.linalg.solve(N @ HinvNT, N @ hc_cp)
                z = hc_cp - HinvNT @ r
            else:
                r = np.zeros(0)
                z = hc_cp
            denom = float(c_p @ z)
            z_ok = denom > 1e-13 * max(1.0, abs(float(c_p @ hc_cp)))
            # step length to a blocking dual (t1) and to full satisfaction (t2)
            t1 = np.inf
            k_drop = -1
            for idx, rk in enumerate(r):
                if rk > 1e-13:
                    cand = u[idx] / rk
                    if cand < t1:
                        t1 = cand
                        k_drop = idx
            t2 = (d_p - float(c_p @ x)) / denom if z_ok else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                status = STATUS_INFEASIBLE
                break
            if z_ok:
                x = x + t * z
            if len(active):
                u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.concatenate([u, [u_p]])
                break
            # partial step: drop the blocking constraint, stay on constraint p
            del active[k_drop]
            u = np.delete(u, k_drop)
        if status != STATUS_OPTIMAL:
            break

    lam = np.zeros(m_all)
    lam[active] = u
    primal, dual = _kkt_residuals(qp, G, h, x, lam)
    row_mult = np.zeros(qp.n_rows)
    lower_mult = np.zeros(n)
    upper_mult = np.zeros(n)
    for idx, (kind, ref) in enumerate(kinds):
        if lam[idx] == 0.0:
            continue
        if kind == 0:
            row_mult[ref] = lam[idx]
        elif kind == 1:
            upper_mult[ref] = lam[idx]
        else:
            lower_mult[ref] = lam[idx]
    return QPSolution(
        x=x,
        status=status,
        iterations=iterations,
        primal_residual=primal,
        dual_residual=dual,
        row_multipliers=row_mult,
        lower_multipliers=lower_mult,
        upper_multipliers=upper_mult,
    )
