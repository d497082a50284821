"""Compiled loops for the 27-point stencil, point smoothers and grid transfers.

All arrays are full node arrays (boundary layer included).  Masks are boolean
arrays of the same shape; only masked nodes are written.
"""

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, fastmath=False, nogil=True)


@nb.njit(cache=True, inline="always")
def _apply_at(u, i, j, k, wc, wf, we, wk):
    s = wc * u[i, j, k]
    if wf != 0.0:
        s += wf * (
            u[i - 1, j, k] + u[i + 1, j, k] + u[i, j - 1, k]
            + u[i, j + 1, k] + u[i, j, k - 1] + u[i, j, k + 1]
        )
    s += we * (
        u[i - 1, j - 1, k] + u[i - 1, j + 1, k] + u[i + 1, j - 1, k] + u[i + 1, j + 1, k]
        + u[i - 1, j, k - 1] + u[i - 1, j, k + 1] + u[i + 1, j, k - 1] + u[i + 1, j, k + 1]
        + u[i, j - 1, k - 1] + u[i, j - 1, k + 1] + u[i, j + 1, k - 1] + u[i, j + 1, k + 1]
    )
    s += wk * (
        u[i - 1, j - 1, k - 1] + u[i - 1, j - 1, k + 1]
        + u[i - 1, j + 1, k - 1] + u[i - 1, j + 1, k + 1]
        + u[i + 1, j - 1, k - 1] + u[i + 1, j - 1, k + 1]
        + u[i + 1, j + 1, k - 1] + u[i + 1, j + 1, k + 1]
    )
    return s


@_jit
def apply(u, out, wc, wf, we, wk):
    n = u.shape[0]
    out[:] = 0.0
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            for k in range(1, n - 1):
                out[i, j, k] = _apply_at(u, i, j, k, wc, wf, we, wk)


@_jit
def residual(u, f, mask, out, wc, wf, we, wk):
    n = u.shape[0]
    out[:] = 0.0
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            for k in range(1, n - 1):
                if mask[i, j, k]:
                    out[i, j, k] = f[i, j, k] - _apply_at(u, i, j, k, wc, wf, we, wk)


@_jit
def jacobi_sweep(u, f, mask, tmp, omega, wc, wf, we, wk):
    n = u.shape[0]
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            for k in range(1, n - 1):
                if mask[i, j, k]:
                    tmp[i, j, k] = f[i, j, k] - _apply_at(u, i, j, k, wc, wf, we, wk)
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            for k in range(1, n - 1):
                if mask[i, j, k]:
                    u[i, j, k] += omega * tmp[i, j, k] / wc


@_jit
def colored_gs_sweep(u, f, mask, wc, wf, we, wk):
    # 2x2x2 parity colouring: no two nodes of one colour share a stencil entry.
    n = u.shape[0]
    for ci in range(2):
        for cj in range(2):
            for ck in range(2):
                for i in range(1 + ci, n - 1, 2):
                    for j in range(1 + cj, n - 1, 2):
                        for k in range(1 + ck, n - 1, 2):
                            if mask[i, j, k]:
                                r = f[i, j, k] - _apply_at(u, i, j, k, wc, wf, we, wk)
                                u[i, j, k] += r / wc


@_jit
def lex_gs_sweep(u, f, mask, wc, wf, we, wk):
    n = u.shape[0]
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            for k in range(1, n - 1):
                if mask[i, j, k]:
                    r = f[i, j, k] - _apply_at(u, i, j, k, wc, wf, we, wk)
                    u[i, j, k] += r / wc


@_jit
def prolongate(c, fine):
    """Trilinear interpolation of coarse node values into ``fine`` (overwritten)."""
    nf = fine.shape[0]
    for I in range(nf):
        i0 = I // 2
        oi = I % 2
        for J in range(nf):
            j0 = J // 2
            oj = J % 2
            for K in range(nf):
                k0 = K // 2
                ok = K % 2
                s = 0.0
                for a in range(oi + 1):
                    for b in range(oj + 1):
                        for d in range(ok + 1):
                            s += c[i0 + a, j0 + b, k0 + d]
                fine[I, J, K] = s / (1 << (oi + oj + ok))


@_jit
def prolongate_add(c, fine, mask):
    nf = fine.shape[0]
    for I in range(1, nf - 1):
        i0 = I // 2
        oi = I % 2
        for J in range(1, nf - 1):
            j0 = J // 2
            oj = J % 2
            for K in range(1, nf - 1):
                if not mask[I, J, K]:
                    continue
                k0 = K // 2
                ok = K % 2
                s = 0.0
                for a in range(oi + 1):
                    for b in range(oj + 1):
                        for d in range(ok + 1):
                            s += c[i0 + a, j0 + b, k0 + d]
                fine[I, J, K] += s / (1 << (oi + oj + ok))


@_jit
def restrict(fine, c):
    """Transpose of trilinear interpolation, written to interior coarse nodes."""
    nc = c.shape[0]
    c[:] = 0.0
    for i in range(1, nc - 1):
        for j in range(1, nc - 1):
            for k in range(1, nc - 1):
                s = 0.0
                for a in range(-1, 2):
                    wa = 1.0 if a == 0 else 0.5
                    for b in range(-1, 2):
                        wb = wa if b == 0 else 0.5 * wa
                        for d in range(-1, 2):
                            w = wb if d == 0 else 0.5 * wb
                            s += w * fine[2 * i + a, 2 * j + b, 2 * k + d]
                c[i, j, k] = s


def warmup():
    """Trigger compilation on a tiny grid."""
    u = np.zeros((5, 5, 5))
    m = np.ones((5, 5, 5), dtype=np.bool_)
    t = np.zeros_like(u)
    c = np.zeros((3, 3, 3))
    apply(u, t, 1.0, 0.0, 0.0, 0.0)
    residual(u, u, m, t, 1.0, 0.0, 0.0, 0.0)
    jacobi_sweep(u, u, m, t, 0.5, 1.0, 0.0, 0.0, 0.0)
    colored_gs_sweep(u, u, m, 1.0, 0.0, 0.0, 0.0)
    lex_gs_sweep(u, u, m, 1.0, 0.0, 0.0, 0.0)
    prolongate(c, u)
    prolongate_add(c, u, m)
    restrict(u, c)
