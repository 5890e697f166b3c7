"""Dense two-phase tableau simplex.

Works on the standard form ``min c.y  s.t.  A y = b, y >= 0`` with
``b >= 0``. Pricing is Dantzig's rule until ``5 * (rows + cols)``
iterations have elapsed in a phase, then Bland's rule, which cannot cycle.
"""

import numpy as np

from .exceptions import NumericalFailure

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2


def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    pcol = tab[:, col].copy()
    pcol[row] = 0.0
    nz = np.nonzero(pcol)[0]
    if nz.size:
        tab[nz] -= np.outer(pcol[nz], tab[row])


def _iterate(tab, basis, n_cols, allowed, tols, bland_after):
    """Run simplex pivots on ``tab`` until optimal or unbounded.

    The last tableau row holds reduced costs; the last column holds the
    right-hand side. ``allowed`` masks columns that may enter.
    """
    m = tab.shape[0] - 1
    max_iter = bland_after + 50 * (m + n_cols) + 1000
    it = 0
    while True:
        red = tab[-1, :n_cols]
        candidates = np.nonzero((red < -tols.opt_tol) & allowed)[0]
        if candidates.size == 0:
            return OPTIMAL
        if it < bland_after:
            col = candidates[np.argmin(red[candidates])]
        else:
            col = candidates[0]
        colv = tab[:m, col]
        pos = colv > tols.pivot_tol
        if not pos.any():
            return UNBOUNDED
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tols.pivot_tol * max(1.0, abs(best)))[0]
        # among tied rows prefer the smallest basic index (Bland), then largest pivot
        if it >= bland_after:
            row = ties[np.argmin(basis[ties])]
        else:
            row = ties[np.argmax(colv[ties])]
        _pivot(tab, row, col)
        basis[row] = col
        it += 1
        if it > max_iter:
            raise NumericalFailure("simplex iteration limit exceeded after anti-cycling fallback")


def standard_simplex(A, b, c, tols):
    """Solve ``min c.y, A y = b, y >= 0``.

    Returns ``(status, y)``; ``y`` is None unless status is OPTIMAL.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    bland_after = 5 * (m + n)

    # phase 1: artificials on every row
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    allowed = np.ones(n + m, dtype=bool)
    _iterate(tab, basis, n + m, allowed, tols, bland_after)

    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -tab[-1, -1] > tols.feas_tol * scale:
        return INFEASIBLE, None

    # drive artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            row = tab[r, :n]
            cand = np.nonzero(np.abs(row) > tols.pivot_tol)[0]
            if cand.size:
                col = cand[np.argmax(np.abs(row[cand]))]
                _pivot(tab, r, col)
                basis[r] = col
            else:
                keep[r] = False
    rows = np.nonzero(keep)[0]
    tab2 = np.zeros((rows.size + 1, n + 1))
    tab2[:-1, :n] = tab[rows, :n]
    tab2[:-1, -1] = tab[rows, -1]
    basis = basis[rows]

    # phase 2 reduced costs
    tab2[-1, :n] = c
    cb = c[basis]
    tab2[-1, :] -= cb @ tab2[:-1, :]
    status = _iterate(tab2, basis, n, np.ones(n, dtype=bool), tols, bland_after)
    if status == UNBOUNDED:
        return UNBOUNDED, None
    y = np.zeros(n)
    y[basis] = tab2[:-1, -1]
    np.maximum(y, 0.0, out=y)
    return OPTIMAL, y
