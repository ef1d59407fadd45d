"""Compiled convolution loops.

All routines compute ``out(x) = V * sum_y f(y) * I[g](y^{-1} x)`` where ``I[g]``
is multilinear interpolation of ``g`` with zero extension and ``V`` the cell
volume.  Each output site is written by exactly one thread with a fixed inner
summation order, so results do not depend on the thread count.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def _eval_law(xp, yp, cf, offs, x, y, out):
    n = x.shape[0]
    for j in range(n):
        acc = 0.0
        for k in range(offs[j], offs[j + 1]):
            m = cf[k]
            for i in range(n):
                e = xp[k, i]
                if e:
                    m *= x[i] ** e
                e = yp[k, i]
                if e:
                    m *= y[i] ** e
            acc += m
        out[j] = acc


@nb.njit(cache=True, nogil=True)
def _interp(g, half, h, z):
    """Multilinear interpolation of a flattened row-major array at point z."""
    n = z.shape[0]
    stride = 1
    idx = np.empty(n, dtype=np.int64)
    frac = np.empty(n)
    strides = np.empty(n, dtype=np.int64)
    for a in range(n - 1, -1, -1):
        strides[a] = stride
        stride *= 2 * half[a] + 1
    for a in range(n):
        u = z[a] / h[a] + half[a]
        fl = np.floor(u)
        i = np.int64(fl)
        if i < -1 or i > 2 * half[a]:
            return 0.0
        idx[a] = i
        frac[a] = u - fl
    total = 0.0
    for corner in range(1 << n):
        w = 1.0
        off = 0
        ok = True
        for a in range(n):
            bit = (corner >> a) & 1
            ia = idx[a] + bit
            if ia < 0 or ia > 2 * half[a]:
                ok = False
                break
            w *= frac[a] if bit else 1.0 - frac[a]
            off += ia * strides[a]
        if ok and w != 0.0:
            total += w * g[off]
    return total


@nb.njit(cache=True, parallel=True, nogil=True)
def direct_generic(fvals, fsites, gflat, half, h, xsites, xp, yp, cf, offs, vol):
    """Reference path: explicit group law plus full multilinear interpolation.

    ``fsites`` are coordinates of the nonzero sites of f (negation inverse is
    assumed by the caller passing already inverted points), ``xsites`` the
    output coordinates.
    """
    nout = xsites.shape[0]
    n = xsites.shape[1]
    out = np.zeros(nout)
    for p in nb.prange(nout):
        z = np.empty(n)
        acc = 0.0
        for q in range(fvals.shape[0]):
            _eval_law(xp, yp, cf, offs, fsites[q], xsites[p], z)
            acc += fvals[q] * _interp(gflat, half, h, z)
        out[p] = acc * vol
    return out


@nb.njit(cache=True, nogil=True)
def _shift(cx, cy, cc, ymy, x):
    # correction c(y', x') = P(-y', x') for antisymmetric-type twists; the
    # caller folds P(y', -y') into the coefficient table
    acc = 0.0
    for k in range(cc.shape[0]):
        m = cc[k]
        for i in range(x.shape[0]):
            e = cx[k, i]
            if e:
                m *= ymy[i] ** e
            e = cy[k, i]
            if e:
                m *= x[i] ** e
        acc += m
    return acc


@nb.njit(cache=True, parallel=True, nogil=True)
def central_pairs(Fh, Gh, fcols, hidx, hcoord, half_h, gnz, cx, cy, cc, c2x, c2c,
                  h_last, m_last, phase_lo, E, E1):
    """Twisted pair sum in the Fourier variable of the central axis.

    Fh, Gh: (N', n_omega) spectra of f and g columns; fcols: nonzero columns
    of f; hidx: (N', n-1) horizontal lattice indices; hcoord: coordinates.
    The correction for a pair is P(-y', x') - P(y', -y') where the first
    polynomial is (cx, cy, cc) and the second (c2x, c2c) is evaluated at y'.
    """
    npts = hidx.shape[0]
    nh = hidx.shape[1]
    nom = Fh.shape[1]
    out = np.zeros((npts, nom), dtype=np.complex128)
    strides = np.empty(nh, dtype=np.int64)
    s = 1
    for a in range(nh - 1, -1, -1):
        strides[a] = s
        s *= 2 * half_h[a] + 1
    for p in nb.prange(npts):
        acc = np.zeros(nom, dtype=np.complex128)
        ymy = np.empty(nh)
        for qq in range(fcols.shape[0]):
            q = fcols[qq]
            zflat = 0
            ok = True
            for a in range(nh):
                d = hidx[p, a] - hidx[q, a]
                if d < -half_h[a] or d > half_h[a]:
                    ok = False
                    break
                zflat += (d + half_h[a]) * strides[a]
            if not ok or not gnz[zflat]:
                continue
            for a in range(nh):
                ymy[a] = -hcoord[q, a]
            c = _shift(cx, cy, cc, ymy, hcoord[p])
            for k in range(c2c.shape[0]):
                m = c2c[k]
                for a in range(nh):
                    e = c2x[k, a]
                    if e:
                        m *= hcoord[q, a] ** e
                c -= m
            u = c / h_last
            fl = np.floor(u)
            th = u - fl
            k0 = m_last + np.int64(fl) - phase_lo
            for w in range(nom):
                ph = E[k0, w] * ((1.0 - th) + th * E1[w])
                acc[w] += Fh[q, w] * Gh[zflat, w] * ph
        for w in range(nom):
            out[p, w] = acc[w]
    return out


@nb.njit(cache=True, parallel=True, nogil=True)
def central_small_g(f, g, half, h_last, gcols, gcol_idx, cx, cy, cc, c2x, c2c,
                    hcoord, hidx, vol):
    """Direct path when g has few nonzero horizontal columns.

    f, g: arrays reshaped to (N', n_last).  For every output column x' and
    every nonzero column z' of g, the column y' = x' - z' of f is correlated
    with the interpolated column of g along the central axis.
    """
    npts = f.shape[0]
    nl = f.shape[1]
    nh = hidx.shape[1]
    M = (nl - 1) // 2
    out = np.zeros((npts, nl))
    strides = np.empty(nh, dtype=np.int64)
    s = 1
    for a in range(nh - 1, -1, -1):
        strides[a] = s
        s *= 2 * half[a] + 1
    for p in nb.prange(npts):
        ymy = np.empty(nh)
        for gg in range(gcols.shape[0]):
            zc = gcols[gg]
            yflat = 0
            ok = True
            for a in range(nh):
                d = hidx[p, a] - gcol_idx[gg, a]
                if d < -half[a] or d > half[a]:
                    ok = False
                    break
                yflat += (d + half[a]) * strides[a]
            if not ok:
                continue
            for a in range(nh):
                ymy[a] = -hcoord[yflat, a]
            c = _shift(cx, cy, cc, ymy, hcoord[p])
            for k in range(c2c.shape[0]):
                m = c2c[k]
                for a in range(nh):
                    e = c2x[k, a]
                    if e:
                        m *= hcoord[yflat, a] ** e
                c -= m
            u = c / h_last
            fl = np.floor(u)
            th = u - fl
            mm = np.int64(fl)
            # out(i) += sum_l f(y', l) [(1-th) g(z', i-l+mm) + th g(z', i-l+mm+1)]
            for l in range(nl):
                fv = f[yflat, l]
                if fv == 0.0:
                    continue
                for i in range(nl):
                    r = i - l + mm + M
                    v = 0.0
                    if 0 <= r < nl:
                        v += (1.0 - th) * g[zc, r]
                    if 0 <= r + 1 < nl:
                        v += th * g[zc, r + 1]
                    out[p, i] += fv * v
    for p in range(npts):
        for i in range(nl):
            out[p, i] *= vol
    return out
