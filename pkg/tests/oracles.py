"""Independent reference implementations used to cross-check the package.

These deliberately avoid the code paths they validate: the Jacobian oracle
differentiates forward kinematics numerically, and the QP oracle solves the
dual problem by accelerated projected gradient.  Keep them dumb and slow.
"""

from __future__ import annotations

import numpy as np

from oacbench.kinchain import forward_kinematics, locate_control_point


def finite_difference_jacobian(chain, q, cp, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a control point's world position."""
    q = np.asarray(q, dtype=float)
    J = np.zeros((3, chain.n))
    for i in range(chain.n):
        qp = q.copy()
        qm = q.copy()
        qp[i] += step
        qm[i] -= step
        pp = locate_control_point(chain, cp, forward_kinematics(chain, qp)).world_point
        pm = locate_control_point(chain, cp, forward_kinematics(chain, qm)).world_point
        J[:, i] = (pp - pm) / (2.0 * step)
    return J


def projected_gradient_reference(H, f, G, h, max_iters: int = 200000,
                                 tol: float = 1e-12):
    """Reference solution of min 0.5 x'Hx + f'x s.t. Gx <= h (H positive definite).

    Runs FISTA on the dual (projection onto the non-negative orthant), which
    is a projected-gradient method, until the projected gradient step is
    tiny.  Returns (x, lam, objective).
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m = G.shape[0]
    Hinv_GT = np.linalg.solve(H, G.T)
    Hinv_f = np.linalg.solve(H, f)
    M = G @ Hinv_GT                      # dual Hessian
    v = G @ Hinv_f + h                   # dual linear term
    if m == 0:
        x = -Hinv_f
        return x, np.zeros(0), 0.5 * x @ H @ x + f @ x
    lipschitz = float(np.linalg.eigvalsh(M)[-1])
    step = 1.0 / max(lipschitz, 1e-30)
    lam = np.zeros(m)
    y = lam.copy()
    t_acc = 1.0
    for _ in range(max_iters):
        grad = M @ y + v
        lam_next = np.maximum(0.0, y - step * grad)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = lam_next + ((t_acc - 1.0) / t_next) * (lam_next - lam)
        move = float(np.max(np.abs(lam_next - lam)))
        lam, t_acc = lam_next, t_next
        if move <= tol:
            break
    x = -np.linalg.solve(H, f + G.T @ lam)
    objective = float(0.5 * x @ H @ x + f @ x)
    return x, lam, objective


def qp_constraint_stack(qp):
    """The solver's constraints as one Gx <= h stack (for oracle use)."""
    n = qp.n
    rows = [qp.A]
    hs = [qp.b]
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(qp.b_u[j]):
            rows.append(eye[j:j + 1])
            hs.append(np.array([qp.b_u[j]]))
    for j in range(n):
        if np.isfinite(qp.b_l[j]):
            rows.append(-eye[j:j + 1])
            hs.append(np.array([-qp.b_l[j]]))
    return np.vstack(rows), np.concatenate(hs)
