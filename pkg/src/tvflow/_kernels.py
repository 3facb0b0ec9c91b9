"""Fused loops for the dual ROF iteration.

Same layout conventions as :mod:`tvflow.calculus`; the numpy versions there
are the reference and the tests check these kernels against them.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def grad_into(v, h, gx, gy):
    ny, nx = v.shape
    for J in range(ny + 1):
        for I in range(nx + 1):
            c = v[J - 1, I - 1] if (J >= 1 and J <= ny and I >= 1 and I <= nx) else 0.0
            r = v[J - 1, I] if (J >= 1 and J <= ny and I < nx) else 0.0
            t = v[J, I - 1] if (J < ny and I >= 1 and I <= nx) else 0.0
            gx[J, I] = (r - c) / h
            gy[J, I] = (t - c) / h


@njit(cache=True)
def primal_into(w, px, py, tau, h, inside, out):
    """``out = inside * (w + tau * div p)``."""
    ny, nx = w.shape
    for j in range(ny):
        for i in range(nx):
            if inside[j, i]:
                d = (px[j + 1, i + 1] - px[j + 1, i] + py[j + 1, i + 1] - py[j, i + 1]) / h
                out[j, i] = w[j, i] + tau * d
            else:
                out[j, i] = 0.0


@njit(cache=True)
def gap_and_primal(v, w, zx, zy, gx, gy, tau, h2, aniso=False):
    """Return ``(gap, primal)`` for the primal point ``v`` built from ``z``.

    ``gx, gy`` must hold ``grad v``.  The gap equals
    ``h^2 sum (|grad v| - z . grad v)`` with the Euclidean norm, or the
    l1 norm when ``aniso``.
    """
    ny1, nx1 = gx.shape
    tvsum = 0.0
    pair = 0.0
    for J in range(ny1):
        for I in range(nx1):
            a = gx[J, I]
            b = gy[J, I]
            if aniso:
                tvsum += abs(a) + abs(b)
            else:
                tvsum += math.sqrt(a * a + b * b)
            pair += zx[J, I] * a + zy[J, I] * b
    fid = 0.0
    ny, nx = v.shape
    for j in range(ny):
        for i in range(nx):
            d = v[j, i] - w[j, i]
            fid += d * d
    return h2 * (tvsum - pair), h2 * tvsum + 0.5 * h2 * fid / tau


@njit(cache=True)
def dual_rof(w, zx, zy, tau, h, inside, step, tol, max_iters, check_every, accelerated,
             aniso=False):
    """Projected (optionally restarted-FISTA) ascent on the ROF dual.

    The dual set is the per-face Euclidean unit ball, or the box
    ``|zx|, |zy| <= 1`` when ``aniso``.  ``zx, zy`` are updated in place.  Returns
    ``(v, rel_gap, iterations, converged)`` where ``v = w + tau div z`` is
    built from the final ``z``.
    """
    ny, nx = w.shape
    h2 = h * h
    v = np.empty_like(w)
    gx = np.empty_like(zx)
    gy = np.empty_like(zy)
    yx = zx.copy()
    yy = zy.copy()
    nzx = np.empty_like(zx)
    nzy = np.empty_like(zy)
    t = 1.0
    rel = np.inf
    it = 0
    while True:
        if it % check_every == 0 or it >= max_iters:
            primal_into(w, zx, zy, tau, h, inside, v)
            grad_into(v, h, gx, gy)
            gap, primal = gap_and_primal(v, w, zx, zy, gx, gy, tau, h2, aniso)
            rel = gap / max(1.0, abs(primal))
            if rel <= tol:
                return v, rel, it, True
            if it >= max_iters:
                return v, rel, it, False
        primal_into(w, yx, yy, tau, h, inside, v)
        grad_into(v, h, gx, gy)
        restart = 0.0
        for J in range(ny + 1):
            for I in range(nx + 1):
                a = yx[J, I] + step * gx[J, I]
                b = yy[J, I] + step * gy[J, I]
                if aniso:
                    a = min(1.0, max(-1.0, a))
                    b = min(1.0, max(-1.0, b))
                else:
                    n = math.sqrt(a * a + b * b)
                    if n > 1.0:
                        a /= n
                        b /= n
                nzx[J, I] = a
                nzy[J, I] = b
                restart += (yx[J, I] - a) * (a - zx[J, I]) + (yy[J, I] - b) * (b - zy[J, I])
        if accelerated:
            if restart > 0.0:
                t = 1.0
            t1 = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t1
            t = t1
        else:
            beta = 0.0
        for J in range(ny + 1):
            for I in range(nx + 1):
                yx[J, I] = nzx[J, I] + beta * (nzx[J, I] - zx[J, I])
                yy[J, I] = nzy[J, I] + beta * (nzy[J, I] - zy[J, I])
                zx[J, I] = nzx[J, I]
                zy[J, I] = nzy[J, I]
        it += 1
