"""Element-loop kernels for tensor-product spline assembly.

All kernels iterate elements in a fixed serial order and accumulate in
place, so identical inputs give bit-identical outputs independent of any
outer worker pool. Coefficient arrays are (nb1, nb2), quadrature arrays
are (ne1, ne2, nq, nq), basis tables are (ne, 3, nq) for the three local
quadratic basis functions per element.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def eval2d(C, N1, dN1, N2, dN2, v, gx, gy):
    """Field value and gradient at every quadrature point."""
    ne1 = N1.shape[0]
    ne2 = N2.shape[0]
    nq = N1.shape[2]
    tv = np.empty((3, nq))
    tg = np.empty((3, nq))
    for e1 in range(ne1):
        for e2 in range(ne2):
            # contract the second index first
            for a in range(3):
                for q2 in range(nq):
                    sv = 0.0
                    sg = 0.0
                    for b in range(3):
                        c = C[e1 + a, e2 + b]
                        sv += c * N2[e2, b, q2]
                        sg += c * dN2[e2, b, q2]
                    tv[a, q2] = sv
                    tg[a, q2] = sg
            for q1 in range(nq):
                for q2 in range(nq):
                    sv = 0.0
                    sx = 0.0
                    sy = 0.0
                    for a in range(3):
                        sv += N1[e1, a, q1] * tv[a, q2]
                        sx += dN1[e1, a, q1] * tv[a, q2]
                        sy += N1[e1, a, q1] * tg[a, q2]
                    v[e1, e2, q1, q2] = sv
                    gx[e1, e2, q1, q2] = sx
                    gy[e1, e2, q1, q2] = sy


@nb.njit(cache=True)
def eval2d_value(C, N1, N2, v):
    """Field value only (used for time-derivative fields)."""
    ne1 = N1.shape[0]
    ne2 = N2.shape[0]
    nq = N1.shape[2]
    tv = np.empty((3, nq))
    for e1 in range(ne1):
        for e2 in range(ne2):
            for a in range(3):
                for q2 in range(nq):
                    sv = 0.0
                    for b in range(3):
                        sv += C[e1 + a, e2 + b] * N2[e2, b, q2]
                    tv[a, q2] = sv
            for q1 in range(nq):
                for q2 in range(nq):
                    sv = 0.0
                    for a in range(3):
                        sv += N1[e1, a, q1] * tv[a, q2]
                    v[e1, e2, q1, q2] = sv


@nb.njit(cache=True)
def scatter_vector(fv, fgx, fgy, N1, dN1, N2, dN2, R):
    """Accumulate sum_q (N_A f + dN_A.(fgx,fgy)) into R (nb1, nb2).

    The integrand samples fv/fgx/fgy must already include the quadrature
    weights.
    """
    ne1 = N1.shape[0]
    ne2 = N2.shape[0]
    nq = N1.shape[2]
    tv = np.empty((nq, 3))
    tx = np.empty((nq, 3))
    for e1 in range(ne1):
        for e2 in range(ne2):
            # contract q2 against the second-direction basis first
            for q1 in range(nq):
                for b in range(3):
                    sv = 0.0
                    sx = 0.0
                    for q2 in range(nq):
                        sv += fv[e1, e2, q1, q2] * N2[e2, b, q2] \
                            + fgy[e1, e2, q1, q2] * dN2[e2, b, q2]
                        sx += fgx[e1, e2, q1, q2] * N2[e2, b, q2]
                    tv[q1, b] = sv
                    tx[q1, b] = sx
            for a in range(3):
                for b in range(3):
                    s = 0.0
                    for q1 in range(nq):
                        s += N1[e1, a, q1] * tv[q1, b] + dN1[e1, a, q1] * tx[q1, b]
                    R[e1 + a, e2 + b] += s


@nb.njit(cache=True)
def scatter_matrix(cw, P1, P2, slots, data):
    """Accumulate the bilinear form with coefficient samples cw into CSR data.

    P1[e,a,c,q] and P2[e,b,d,q] are precomputed products of basis (or basis
    derivative) values along each direction; cw includes the quadrature
    weights. slots maps (e1,e2,a,b,c,d) to positions in data.
    """
    ne1 = P1.shape[0]
    ne2 = P2.shape[0]
    nq = P1.shape[3]
    T = np.empty((3, 3, nq))
    for e1 in range(ne1):
        for e2 in range(ne2):
            for a in range(3):
                for c in range(3):
                    for q2 in range(nq):
                        s = 0.0
                        for q1 in range(nq):
                            s += P1[e1, a, c, q1] * cw[e1, e2, q1, q2]
                        T[a, c, q2] = s
            for a in range(3):
                for b in range(3):
                    for c in range(3):
                        for d in range(3):
                            s = 0.0
                            for q2 in range(nq):
                                s += T[a, c, q2] * P2[e2, b, d, q2]
                            data[slots[e1, e2, a, b, c, d]] += s
