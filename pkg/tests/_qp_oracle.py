"""Exact reference solver for tiny soft-margin linear SVM instances.

The dual of the L1-hinge, L2-regularized SVM with the bias folded into an
augmented constant-1 feature is

    max_alpha  sum(alpha) - 0.5 alpha' Q alpha,   0 <= alpha <= C,
    Q_ij = y_i y_j (x_i . x_j + 1)

a box-constrained concave QP.  For a handful of points the optimum can be
found exactly: enumerate every assignment of points to {at 0, free, at C},
solve the linear system on the free set, and keep KKT-consistent
candidates.  The primal weight vector w = sum alpha_i y_i x~_i is unique
even when alpha is not, so it is the quantity to compare against.
"""

from __future__ import annotations

import itertools

import numpy as np

_EPS = 1e-8


def solve_qp_exact(X: np.ndarray, y: np.ndarray, c_penalty: float):
    """Return (w_aug, alpha, dual_objective) at the dual optimum.

    Only for n <= ~8 points: the sweep is 3^n linear solves.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    Xa = np.hstack([X, np.ones((n, 1))])
    G = y[:, None] * Xa
    Q = G @ G.T

    best = None
    for assign in itertools.product((0, 1, 2), repeat=n):
        free = [i for i, a in enumerate(assign) if a == 1]
        upper = [i for i, a in enumerate(assign) if a == 2]
        alpha = np.zeros(n)
        alpha[upper] = c_penalty
        if free:
            rhs = np.ones(len(free))
            if upper:
                rhs = rhs - Q[np.ix_(free, upper)] @ (c_penalty * np.ones(len(upper)))
            sol, *_ = np.linalg.lstsq(Q[np.ix_(free, free)], rhs, rcond=None)
            # lstsq always returns something; reject it unless it truly
            # solves the stationarity system (singular+inconsistent case)
            if not np.allclose(Q[np.ix_(free, free)] @ sol, rhs, atol=_EPS):
                continue
            alpha[free] = sol
        if alpha.min() < -_EPS or alpha.max() > c_penalty + _EPS:
            continue
        alpha = np.clip(alpha, 0.0, c_penalty)

        grad = Q @ alpha - 1.0
        ok = True
        for i, a in enumerate(assign):
            if a == 0 and grad[i] < -_EPS:
                ok = False
                break
            if a == 2 and grad[i] > _EPS:
                ok = False
                break
            if a == 1 and abs(grad[i]) > _EPS:
                ok = False
                break
        if not ok:
            continue

        dual = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
        if best is None or dual > best[2]:
            w = G.T @ alpha
            best = (w, alpha.copy(), dual)

    if best is None:
        raise AssertionError("no KKT-consistent assignment found; widen tolerances")
    return best
