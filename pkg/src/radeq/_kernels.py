"""Compiled inner loops: chord marching with trilinear interpolation.

All loops are sequential with a fixed summation order, so results are
bit-reproducible.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _stencil(px, py, pz, ox, oy, oz, inv_h, nx, ny, nz):
    fx = (px - ox) * inv_h
    fy = (py - oy) * inv_h
    fz = (pz - oz) * inv_h
    i = int(math.floor(fx))
    j = int(math.floor(fy))
    k = int(math.floor(fz))
    i = min(max(i, 0), nx - 2)
    j = min(max(j, 0), ny - 2)
    k = min(max(k, 0), nz - 2)
    fx = min(max(fx - i, 0.0), 1.0)
    fy = min(max(fy - j, 0.0), 1.0)
    fz = min(max(fz - k, 0.0), 1.0)
    return i, j, k, fx, fy, fz


@njit(cache=True, inline="always")
def _interp(F, i, j, k, fx, fy, fz):
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    return (gx * (gy * (gz * F[i, j, k] + fz * F[i, j, k + 1])
                  + fy * (gz * F[i, j + 1, k] + fz * F[i, j + 1, k + 1]))
            + fx * (gy * (gz * F[i + 1, j, k] + fz * F[i + 1, j, k + 1])
                    + fy * (gz * F[i + 1, j + 1, k] + fz * F[i + 1, j + 1, k + 1])))


@njit(cache=True)
def interp_point(F, origin, h, px, py, pz):
    nx, ny, nz = F.shape
    i, j, k, fx, fy, fz = _stencil(px, py, pz, origin[0], origin[1], origin[2], 1.0 / h, nx, ny, nz)
    return _interp(F, i, j, k, fx, fy, fz)


@njit(cache=True)
def segment_integral(F, origin, h, x, y, step):
    """Trapezoid integral of the interpolated field along the segment [x, y]."""
    L = math.sqrt((y[0] - x[0]) ** 2 + (y[1] - x[1]) ** 2 + (y[2] - x[2]) ** 2)
    if L == 0.0:
        return 0.0
    M = max(int(math.ceil(L / step - 1e-12)), 1)
    acc = 0.0
    prev = 0.0
    t_prev = 0.0
    for m in range(M + 1):
        t = min(m * step, L)
        if m == M:
            t = L
        a = t / L
        v = interp_point(F, origin, h, x[0] + a * (y[0] - x[0]), x[1] + a * (y[1] - x[1]),
                         x[2] + a * (y[2] - x[2]))
        if m > 0:
            acc += 0.5 * (prev + v) * (t - t_prev)
        prev = v
        t_prev = t
    return acc


@njit(cache=True)
def chord_sweep(A, S, src, points, dirs, slen, step, ka, ks, wa, ws, same, group, cw, bw,
                origin, h, out_bulk, out_bnd):
    """Accumulate telescoped chord integrals for every (point, direction).

    For channel ``c`` the extinction is ``ka[c] A + ks[c] S`` and the source
    ``(wa[c] A + ws[c] S) / extinction * src[c]`` (or ``src[c]`` when
    ``same[c]``). Along the backward chord ``x - t n``, ``t`` in ``[0, s]``,

        bulk = sum_k avg(source)_k (E_k - E_{k+1}),   E = exp(-tau),

    and ``out_bulk[group[c], p, d] += cw[c] * bulk``,
    ``out_bnd[group[c], p, d] += bw[c, d] * E(s)``.

    ``src`` has shape ``(C, Ds, nx, ny, nz)`` with ``Ds`` either 1 (shared by
    all directions) or the number of directions.
    """
    nx, ny, nz = A.shape
    C = ka.shape[0]
    P = points.shape[0]
    D = dirs.shape[0]
    Ds = src.shape[1]
    ox, oy, oz = origin[0], origin[1], origin[2]
    inv_h = 1.0 / h
    tau = np.zeros(C)
    Eprev = np.ones(C)
    rprev = np.zeros(C)
    kprev = np.zeros(C)
    acc = np.zeros(C)
    for p in range(P):
        x0 = points[p, 0]
        y0 = points[p, 1]
        z0 = points[p, 2]
        for d in range(D):
            n0 = dirs[d, 0]
            n1 = dirs[d, 1]
            n2 = dirs[d, 2]
            s = slen[p, d]
            M = int(math.ceil(s / step - 1e-12))
            if M < 1:
                M = 1
            ds = d if Ds > 1 else 0
            t_prev = 0.0
            for m in range(M + 1):
                t = m * step
                if m == M or t > s:
                    t = s
                i, j, k, fx, fy, fz = _stencil(x0 - t * n0, y0 - t * n1, z0 - t * n2,
                                               ox, oy, oz, inv_h, nx, ny, nz)
                a = _interp(A, i, j, k, fx, fy, fz)
                b = _interp(S, i, j, k, fx, fy, fz)
                dt = t - t_prev
                for c in range(C):
                    sv = _interp(src[c, ds], i, j, k, fx, fy, fz)
                    kap = ka[c] * a + ks[c] * b
                    if same[c]:
                        r = sv
                    elif kap > 0.0:
                        r = (wa[c] * a + ws[c] * b) / kap * sv
                    else:
                        r = 0.0
                    if m == 0:
                        tau[c] = 0.0
                        Eprev[c] = 1.0
                        acc[c] = 0.0
                    else:
                        tau[c] += 0.5 * (kprev[c] + kap) * dt
                        E = math.exp(-tau[c])
                        acc[c] += 0.5 * (rprev[c] + r) * (Eprev[c] - E)
                        Eprev[c] = E
                    kprev[c] = kap
                    rprev[c] = r
                t_prev = t
            for c in range(C):
                g = group[c]
                out_bulk[g, p, d] += cw[c] * acc[c]
                out_bnd[g, p, d] += bw[c, d] * Eprev[c]
