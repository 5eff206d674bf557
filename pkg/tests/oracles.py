"""Brute-force reference computations used by the tests.

None of these call into the code paths they check.
"""

import numpy as np


def prox_l1_grid(v, theta, step=1e-4):
    """argmin_x 0.5 (x - v)^2 + theta |x| over a uniform grid."""
    half = abs(v) + 1.0
    n = int(round(2 * half / step))
    xs = -half + step * np.arange(n + 1)
    # Make sure 0 is a grid point: the minimizer is often exactly there.
    xs = np.append(xs, 0.0)
    obj = 0.5 * (xs - v) ** 2 + theta * np.abs(xs)
    return xs[np.argmin(obj)]


def entropy_objective(w, a, gamma):
    """sum(w |x|) + gamma sum(w log w) for rows of w (0 log 0 = 0)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        wl = np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)
    return w @ a + gamma * wl.sum(axis=-1)


def simplex_grid_minimizer_2(a, gamma, step=1e-5):
    """Exhaustive grid over the 1-simplex {(t, 1 - t)}."""
    t = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    w = np.stack([t, 1 - t], axis=1)
    return w[np.argmin(entropy_objective(w, np.asarray(a, float), gamma))]


def simplex_grid_minimizer_3(a, gamma, final_step=1e-5):
    """Coarse-to-fine grid search over the 2-simplex.

    The objective is strictly convex, so refining a window around the best
    coarse point finds the same point a full fine grid would (an exhaustive
    grid at 1e-5 would have ~5e9 points).
    """
    a = np.asarray(a, float)
    step = 1e-2
    lo = np.zeros(2)
    hi = np.ones(2)
    best = None
    while True:
        g0 = np.arange(lo[0], hi[0] + step / 2, step)
        g1 = np.arange(lo[1], hi[1] + step / 2, step)
        W0, W1 = np.meshgrid(g0, g1, indexing="ij")
        W0, W1 = W0.ravel(), W1.ravel()
        ok = (W0 >= 0) & (W1 >= 0) & (W0 + W1 <= 1 + 1e-15)
        w = np.stack([W0[ok], W1[ok], np.clip(1 - W0[ok] - W1[ok], 0, None)], axis=1)
        best = w[np.argmin(entropy_objective(w, a, gamma))]
        if step <= final_step * 1.0001:
            return best
        lo = np.clip(best[:2] - 3 * step, 0, 1)
        hi = np.clip(best[:2] + 3 * step, 0, 1)
        step /= 10


def central_difference_gradient(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
