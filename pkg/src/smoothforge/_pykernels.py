"""Pure-Python (numpy) implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the compiled versions are checked against.  Signatures must stay in
lockstep with ``_ckernels.pyx``.
"""

import numpy as np
from scipy.linalg import solve_triangular


def bspline_basis(x, knots, degree):
    """Dense B-spline design matrix via the triangular Cox-de Boor scheme.

    ``knots`` must be clamped with non-degenerate interior spans and every
    ``x`` must lie inside ``[knots[0], knots[-1]]``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.ascontiguousarray(knots, dtype=np.float64)
    n = x.shape[0]
    nb = t.shape[0] - degree - 1
    left = np.searchsorted(t, x, side="right") - 1
    left = np.clip(left, degree, nb - 1)

    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    dl = np.zeros((n, degree + 1))
    dr = np.zeros((n, degree + 1))
    for j in range(1, degree + 1):
        dl[:, j] = x - t[left + 1 - j]
        dr[:, j] = t[left + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (dr[:, r + 1] + dl[:, j - r])
            vals[:, r] = saved + dr[:, r + 1] * temp
            saved = dl[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((n, nb))
    rows = np.arange(n)
    for r in range(degree + 1):
        out[rows, left - degree + r] = vals[:, r]
    return out


def gibbs_block(XtX, Xty, X, y, prior_fixed, group, tau_rate0, lam_rate0,
                Z, Gt, Gl, b, tau, lam, update_tau, update_lam,
                out_b, out_tau, out_lam):
    """Run ``Z.shape[0]`` conjugate Gibbs sweeps (b, then tau, then each lambda).

    All randomness arrives pre-drawn: ``Z`` standard normals, ``Gt`` and
    ``Gl`` standard gamma variates with the posterior shapes already applied.
    ``b`` and ``lam`` are updated in place; the final tau is returned.
    """
    m, p = Z.shape
    fixed = group < 0
    n_groups = lam.shape[0]
    members = [np.flatnonzero(group == g) for g in range(n_groups)]
    for it in range(m):
        prec = np.where(fixed, prior_fixed, lam[np.maximum(group, 0)] if n_groups else 0.0)
        Q = tau * XtX
        Q[np.diag_indices(p)] += prec
        L = np.linalg.cholesky(Q)
        u = solve_triangular(L, tau * Xty, lower=True)
        b[:] = solve_triangular(L, u + Z[it], lower=True, trans="T")
        if update_tau:
            r = y - X @ b
            tau = Gt[it] / (tau_rate0 + 0.5 * float(r @ r))
        if update_lam:
            for g in range(n_groups):
                bg = b[members[g]]
                lam[g] = Gl[it, g] / (lam_rate0 + 0.5 * float(bg @ bg))
        out_b[it] = b
        out_tau[it] = tau
        out_lam[it] = lam
    return tau
