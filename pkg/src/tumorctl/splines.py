"""Tensor-product quadratic B-spline space on the square domain.

Open uniform knot vectors give C^1 quadratics with (n_el + 2) basis
functions per direction; only the first and last of them have a nonzero
boundary trace, so strong Dirichlet constraints reduce to masking those
indices. Quadrature is a 3x3 Gauss rule per element, exact for products
of two quadratics.

The space owns everything assembly needs: basis tables at quadrature
points, the shared CSR sparsity pattern of all coupling blocks, the
element-to-CSR slot map, constant mass/stiffness data and the integration
weight vector.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from tumorctl import _kernels
from tumorctl.linalg import gmres_solve

DEGREE = 2
NQ = 3  # Gauss points per direction per element


class ConfigurationError(ValueError):
    """Invalid discretization request."""


def open_knots(n_el: int, length: float) -> np.ndarray:
    h = length / n_el
    return np.concatenate([
        np.zeros(DEGREE + 1),
        np.arange(1, n_el) * h,
        np.full(DEGREE + 1, length),
    ])


def bspline_tables(knots: np.ndarray, x: np.ndarray):
    """Dense values and first derivatives of all basis functions at x.

    Cox-de Boor recursion over the full knot vector; the last nonempty
    interval is closed on the right so the domain endpoint is covered.
    Returns (B, dB) of shape (len(x), n_basis).
    """
    x = np.asarray(x, dtype=float)
    p = DEGREE
    nk = len(knots)
    nb = nk - p - 1
    L = knots[-1]

    N = np.zeros((len(x), nk - 1))
    for i in range(nk - 1):
        lo, hi = knots[i], knots[i + 1]
        if hi > lo:
            inside = (x >= lo) & ((x < hi) | ((hi == L) & (x <= hi)))
            N[inside, i] = 1.0
    Nprev = None
    for k in range(1, p + 1):
        Nk = np.zeros((len(x), nk - 1 - k))
        for i in range(nk - 1 - k):
            den1 = knots[i + k] - knots[i]
            den2 = knots[i + k + 1] - knots[i + 1]
            term = 0.0
            if den1 > 0:
                term = (x - knots[i]) / den1 * N[:, i]
            if den2 > 0:
                term = term + (knots[i + k + 1] - x) / den2 * N[:, i + 1]
            Nk[:, i] = term
        Nprev = N
        N = Nk
    B = N[:, :nb]

    dB = np.zeros((len(x), nb))
    for i in range(nb):
        den1 = knots[i + p] - knots[i]
        den2 = knots[i + p + 1] - knots[i + 1]
        t = 0.0
        if den1 > 0:
            t = p / den1 * Nprev[:, i]
        if den2 > 0:
            t = t - p / den2 * Nprev[:, i + 1]
        dB[:, i] = t
    return B, dB


class SplineSpace:
    """Immutable discretization data for one square-domain resolution."""

    def __init__(self, elements_per_side: int, side_length: float):
        if not (isinstance(elements_per_side, (int, np.integer)) and elements_per_side >= 4):
            raise ConfigurationError(
                f"need at least 4 elements per side, got {elements_per_side!r}")
        if not side_length > 0:
            raise ConfigurationError("side length must be positive")
        ne = int(elements_per_side)
        L = float(side_length)
        self.n_el = ne
        self.length = L
        self.h = L / ne
        self.degree = DEGREE
        self.nb1 = ne + DEGREE          # basis count per direction
        self.n_b = self.nb1 ** 2
        self.knots = open_knots(ne, L)

        # quadrature and basis tables (both directions identical)
        gx, gw = np.polynomial.legendre.leggauss(NQ)
        self.qx = np.empty((ne, NQ))
        self.qw = np.empty((ne, NQ))
        for e in range(ne):
            x0 = e * self.h
            self.qx[e] = x0 + (gx + 1.0) * (self.h / 2.0)
            self.qw[e] = gw * (self.h / 2.0)
        B, dB = bspline_tables(self.knots, self.qx.ravel())
        self.N = np.empty((ne, 3, NQ))
        self.dN = np.empty((ne, 3, NQ))
        for e in range(ne):
            for a in range(3):
                self.N[e, a] = B[e * NQ:(e + 1) * NQ, e + a]
                self.dN[e, a] = dB[e * NQ:(e + 1) * NQ, e + a]
        # local product tables for bilinear assembly
        self.PNN = np.einsum("eaq,ecq->eacq", self.N, self.N)
        self.PDD = np.einsum("eaq,ecq->eacq", self.dN, self.dN)
        # tensor quadrature weights over elements
        self.W2 = np.einsum("eq,fr->efqr", self.qw, self.qw)
        self.quad_x = np.broadcast_to(
            self.qx[:, None, :, None], (ne, ne, NQ, NQ)).copy()
        self.quad_y = np.broadcast_to(
            self.qx[None, :, None, :], (ne, ne, NQ, NQ)).copy()

        self._build_pattern()
        self._build_constants()

    # -- sparsity pattern shared by every coupling block ------------------

    def _build_pattern(self):
        nb1, ne = self.nb1, self.n_el
        lo = np.maximum(np.arange(nb1) - DEGREE, 0)
        hi = np.minimum(np.arange(nb1) + DEGREE, nb1 - 1)
        w1 = hi - lo + 1                      # band width per 1d index
        self._band_lo = lo
        self._band_w = w1

        counts = np.multiply.outer(w1, w1).ravel()
        indptr = np.zeros(self.n_b + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int32)
        pos = 0
        for i in range(nb1):
            ks = np.arange(lo[i], hi[i] + 1, dtype=np.int32) * nb1
            for j in range(nb1):
                cols = (ks[:, None] + np.arange(lo[j], hi[j] + 1, dtype=np.int32)).ravel()
                indices[pos:pos + cols.size] = cols
                pos += cols.size
        self.indptr = indptr
        self.indices = indices
        self.nnz = int(indptr[-1])

        # element-local (a,b,c,d) -> CSR slot
        e = np.arange(ne)
        a = np.arange(3)
        row1 = e[:, None] + a[None, :]                    # (ne,3)
        off1 = (e[:, None, None] + a[None, None, :]) - lo[row1][:, :, None]
        # off1[e, a_row, c_col] = column offset inside the 1d band
        g = (row1[:, None, :, None] * nb1 + row1[None, :, None, :])  # (ne,ne,3,3) global row
        base = indptr[g]                                   # (ne,ne,3,3)
        wj = w1[row1]                                      # (ne,3) second-direction widths
        self.slots = (
            base[:, :, :, :, None, None]
            + off1[:, None, :, None, :, None] * wj[None, :, None, :, None, None]
            + off1[None, :, None, :, None, :]
        ).astype(np.int64)

        ar = np.arange(nb1)
        dpos = (ar - lo)[:, None] * w1[None, :] + (ar - lo)[None, :]
        self.diag_slots = (indptr[:-1] + dpos.ravel()).astype(np.int64)

        m1 = np.zeros(nb1, dtype=bool)
        m1[0] = m1[-1] = True
        self.boundary2d = m1[:, None] | m1[None, :]
        self.boundary_idx = np.flatnonzero(self.boundary2d.ravel())
        bflat = self.boundary2d.ravel()
        self.row_constrained_nnz = np.repeat(bflat, np.diff(indptr))
        self.col_constrained_nnz = bflat[indices]

    def _build_constants(self):
        self.mass_data = self.bilinear_data(self.W2, "NN", "NN")
        self.lap_data = (
            self.bilinear_data(self.W2, "DD", "NN")
            + self.bilinear_data(self.W2, "NN", "DD")
        )
        R = np.zeros((self.nb1, self.nb1))
        zero = np.zeros_like(self.W2)
        _kernels.scatter_vector(self.W2, zero, zero,
                                self.N, self.dN, self.N, self.dN, R)
        self.w_int = R.ravel().copy()   # integral of each basis function
        self._mass = self.csr(self.mass_data)
        cm = self.mass_data.copy()
        cm[self.row_constrained_nnz] = 0.0
        cm[self.col_constrained_nnz] = 0.0
        cm[self.diag_slots[self.boundary_idx]] = 1.0
        self.mass_data_constrained = cm

    # -- assembly helpers --------------------------------------------------

    def csr(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n_b, self.n_b), copy=False)

    def bilinear_data(self, coef_weighted, kind1: str, kind2: str) -> np.ndarray:
        """Assemble CSR data of a bilinear form with quad-point coefficients.

        kind "NN" pairs basis values, "DD" pairs basis derivatives along
        that direction; coef_weighted must include quadrature weights.
        """
        P1 = self.PNN if kind1 == "NN" else self.PDD
        P2 = self.PNN if kind2 == "NN" else self.PDD
        data = np.zeros(self.nnz)
        _kernels.scatter_matrix(np.ascontiguousarray(coef_weighted),
                                P1, P2, self.slots, data)
        return data

    def galerkin_vector(self, fv, fgx=None, fgy=None) -> np.ndarray:
        """Vector of integrals N_A f + grad(N_A).(fgx,fgy), weights included."""
        zero = np.zeros_like(fv)
        R = np.zeros((self.nb1, self.nb1))
        _kernels.scatter_vector(
            np.ascontiguousarray(fv),
            zero if fgx is None else np.ascontiguousarray(fgx),
            zero if fgy is None else np.ascontiguousarray(fgy),
            self.N, self.dN, self.N, self.dN, R)
        return R.ravel()

    def eval_quad(self, coeffs):
        """Field value and gradient at all quadrature points."""
        shape = (self.n_el, self.n_el, NQ, NQ)
        v = np.empty(shape)
        gx = np.empty(shape)
        gy = np.empty(shape)
        _kernels.eval2d(np.ascontiguousarray(coeffs.reshape(self.nb1, self.nb1)),
                        self.N, self.dN, self.N, self.dN, v, gx, gy)
        return v, gx, gy

    def eval_quad_value(self, coeffs):
        v = np.empty((self.n_el, self.n_el, NQ, NQ))
        _kernels.eval2d_value(np.ascontiguousarray(coeffs.reshape(self.nb1, self.nb1)),
                              self.N, self.N, v)
        return v

    # -- integrals and projection ------------------------------------------

    def integrate_field(self, coeffs) -> float:
        return float(self.w_int @ np.asarray(coeffs).ravel())

    def integrate_product(self, ca, cb) -> float:
        return float(np.asarray(ca).ravel() @ (self._mass @ np.asarray(cb).ravel()))

    def mass_matrix(self) -> sp.csr_matrix:
        return self._mass

    def l2_project(self, f, constrained=False) -> np.ndarray:
        """L2 projection of a callable f(x, y) onto the space.

        With constrained=True the projection is onto the subspace with
        zero boundary trace (boundary coefficients pinned to 0).
        """
        vals = np.asarray(f(self.quad_x, self.quad_y), dtype=float)
        if vals.shape != self.W2.shape:
            vals = np.broadcast_to(vals, self.W2.shape)
        rhs = self.galerkin_vector(vals * self.W2)
        if constrained:
            rhs = rhs.copy()
            rhs[self.boundary_idx] = 0.0
            mat = self.csr(self.mass_data_constrained)
        else:
            mat = self._mass
        res = gmres_solve(lambda x: mat @ x, rhs, mat.diagonal(),
                          eps_L=1e-13, max_iters=2000)
        return res.x

    # -- sampling ------------------------------------------------------------

    def lattice(self, n_points: int) -> np.ndarray:
        return np.linspace(0.0, self.length, n_points)

    def sample_lattice(self, coeffs, n_points: int) -> np.ndarray:
        """Field values on a uniform (n x n) lattice including the boundary."""
        x = self.lattice(n_points)
        B, _ = bspline_tables(self.knots, x)
        C = np.asarray(coeffs).reshape(self.nb1, self.nb1)
        return B @ C @ B.T


def build_space(elements_per_side: int, L_d: float) -> SplineSpace:
    return SplineSpace(elements_per_side, L_d)
