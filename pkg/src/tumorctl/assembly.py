"""Galerkin assembly of the tumor system and its linearizations.

The three fields (tumor phase, nutrient, serum marker) share one
quadratic B-spline space, so every coupling block reuses the space's CSR
pattern and a Newton operator is a 3x3 grid of equally shaped sparse
blocks. The tumor phase carries a homogeneous Dirichlet constraint: its
boundary rows of the residual are replaced by the boundary coefficients
themselves, and the matching matrix rows and columns are masked. That
keeps boundary increments exactly zero for feasible iterates and makes
the adjoint operator the exact transpose of the forward linearization.
"""

from typing import Callable, NamedTuple, Optional

import numpy as np

from .linalg import BlockOperator
from .model import (
    ModelParams,
    double_well,
    interp_gain,
    net_growth,
    net_growth_prime,
)
from .splines import SplineSpace

Controls = Callable[[float], tuple]


class AssembledSystem(NamedTuple):
    """Residual vector with (optionally) the Newton operator and its diagonal."""

    residual: np.ndarray
    operator: Optional[BlockOperator]
    diag: Optional[np.ndarray]


class StateInterpolant:
    """Piecewise-linear sampler of a stored coefficient trajectory.

    Parameters
    ----------
    times : ndarray, shape (n_t,)
        Strictly increasing sample times.
    states : ndarray, shape (n_t, n_dof)
        Stacked coefficient vectors at those times.

    Sampling at an intermediate-level time of the stepping scheme
    reproduces exactly the states the nonlinear march saw there, because
    the scheme's value level is itself a linear combination of the two
    surrounding nodes.
    """

    def __init__(self, times, states):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ValueError("need at least one sample time")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("sample times must increase strictly")
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise ValueError("states must have shape (n_times, n_dof)")

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.states[0].copy()
        if t >= ts[-1]:
            return self.states[-1].copy()
        j = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.states[j] + w * self.states[j + 1]


class SystemAssembler:
    """Constant blocks, constraint masks and helpers shared by all systems."""

    field_names = ("phi", "sigma", "serum")

    def __init__(self, space: SplineSpace, params: ModelParams):
        self.space = space
        self.params = params
        self._bdiag_slots = space.diag_slots[space.boundary_idx]
        # constant serum blocks: decay-diffusion and the phase source
        self._kpp_data = params.D * space.lap_data + params.gamma_p * space.mass_data
        self._kpf_raw = -params.alpha_ch * space.mass_data
        self._kpf_data = self._kpf_raw.copy()
        self._mask_cols(self._kpf_data)
        # mass block of the constrained phase rows (rows, cols and diag zeroed)
        mf = space.mass_data.copy()
        self._mask_phi(mf, 0.0)
        self._mass_ff_data = mf
        self._mass = space.mass_matrix()

    @property
    def n_b(self) -> int:
        return self.space.n_b

    @property
    def n_dof(self) -> int:
        return 3 * self.space.n_b

    def split(self, vec: np.ndarray):
        """Views of the three field slices of a stacked coefficient vector."""
        n = self.space.n_b
        return vec[:n], vec[n:2 * n], vec[2 * n:]

    # -- constraint masking (in place, on freshly built data arrays) --------

    def _mask_rows(self, data: np.ndarray) -> None:
        data[self.space.row_constrained_nnz] = 0.0

    def _mask_cols(self, data: np.ndarray) -> None:
        data[self.space.col_constrained_nnz] = 0.0

    def _mask_phi(self, data: np.ndarray, bdiag: float) -> None:
        data[self.space.row_constrained_nnz] = 0.0
        data[self.space.col_constrained_nnz] = 0.0
        data[self._bdiag_slots] = bdiag

    @staticmethod
    def _bdiag(c_m: float, c_k: float) -> float:
        # value of the pinned boundary diagonal; c_k is the true derivative
        # of the boundary residual and the c_m fallback keeps rate-only
        # systems (consistent initialization) nonsingular
        return c_k if c_k != 0.0 else c_m

    def _reaction(self, coef) -> np.ndarray:
        """CSR data of the mass-type block weighted by a quad-point field."""
        return self.space.bilinear_data(coef * self.space.W2, "NN", "NN")


class ForwardAssembler(SystemAssembler):
    """Residual and Newton operator of the coupled nonlinear system.

    Parameters
    ----------
    space : SplineSpace
    params : ModelParams
    controls : callable
        Maps a time to the pair of dose rates ``(U, S)`` (cytotoxic,
        antiangiogenic).

    The ``assemble`` contract is shared by every system in this module:
    ``y`` holds value-level coefficients, ``ydot`` rate-level ones, and
    the Newton operator is ``c_m * d(residual)/d(rate) + c_k *
    d(residual)/d(value)``. The stepper chooses ``c_m`` and ``c_k``.
    """

    def __init__(self, space: SplineSpace, params: ModelParams, controls: Controls):
        super().__init__(space, params)
        self.controls = controls

    def assemble(self, ydot, y, t, c_m, c_k, need_matrix=True) -> AssembledSystem:
        sp, prm = self.space, self.params
        if y.size != self.n_dof or ydot.size != self.n_dof:
            raise ValueError("state vector size mismatch")
        u, s = self.controls(t)

        phi_c, sg_c, pv_c = self.split(y)
        fd_c, sd_c, pd_c = self.split(ydot)
        fv, fgx, fgy = sp.eval_quad(phi_c)
        sv, sgx, sgy = sp.eval_quad(sg_c)
        pv, pgx, pgy = sp.eval_quad(pv_c)
        fd = sp.eval_quad_value(fd_c)
        sd = sp.eval_quad_value(sd_c)
        pd = sp.eval_quad_value(pd_c)

        _, dF, d2F = double_well(fv, prm.M)
        _, dh, d2h = interp_gain(fv, prm.M)
        gap = u - net_growth(sv, prm)

        W2 = sp.W2
        r_f = fd + dF + dh * gap
        r_s = (sd + prm.gamma_h * sv + prm.gamma_ch * sv * fv
               - prm.S_h * (1.0 - fv) - (prm.S_c - s) * fv)
        r_p = pd + prm.gamma_p * pv - prm.alpha_h - prm.alpha_ch * fv

        R = np.empty(self.n_dof)
        Rf, Rs, Rp = self.split(R)
        Rf[:] = sp.galerkin_vector(r_f * W2, prm.lam * W2 * fgx, prm.lam * W2 * fgy)
        Rs[:] = sp.galerkin_vector(r_s * W2, prm.eta * W2 * sgx, prm.eta * W2 * sgy)
        Rp[:] = sp.galerkin_vector(r_p * W2, prm.D * W2 * pgx, prm.D * W2 * pgy)
        Rf[sp.boundary_idx] = phi_c[sp.boundary_idx]

        if not need_matrix:
            return AssembledSystem(R, None, None)

        mp = net_growth_prime(sv, prm)
        c_ff = d2F + d2h * gap
        c_fs = -dh * mp
        c_sf = prm.gamma_ch * sv + s - prm.S_ch
        c_ss = prm.gamma_h + prm.gamma_ch * fv

        dff = c_k * (prm.lam * sp.lap_data + self._reaction(c_ff)) \
            + c_m * self._mass_ff_data
        self._mask_phi(dff, self._bdiag(c_m, c_k))
        dfs = c_k * self._reaction(c_fs)
        self._mask_rows(dfs)
        dsf = c_k * self._reaction(c_sf)
        self._mask_cols(dsf)
        dss = c_k * (prm.eta * sp.lap_data + self._reaction(c_ss)) \
            + c_m * sp.mass_data
        dpf = c_k * self._kpf_data
        dpp = c_k * self._kpp_data + c_m * sp.mass_data

        blocks = [
            [sp.csr(dff), sp.csr(dfs), None],
            [sp.csr(dsf), sp.csr(dss), None],
            [sp.csr(dpf), None, sp.csr(dpp)],
        ]
        op = BlockOperator(blocks, self.n_b)
        return AssembledSystem(R, op, op.diagonal())


class _LinearizedAssembler(SystemAssembler):
    """Shared frozen-coefficient machinery for tangent and adjoint systems.

    Coefficient fields come from a stored trajectory, so for a fixed time
    the residual is affine in the unknown and the blocks are cached.
    """

    def __init__(self, space, params, base: StateInterpolant, controls: Controls):
        super().__init__(space, params)
        self.base = base
        self.controls = controls
        self._cache_t = None
        self._cache = None
        self._op_cache = None

    def _frozen(self, t: float) -> dict:
        if self._cache_t is not None and t == self._cache_t:
            return self._cache
        sp, prm = self.space, self.params
        yb = self.base(t)
        phi_c, sg_c, p_c = (np.array(part) for part in self.split(yb))
        fv = sp.eval_quad_value(phi_c)
        sv = sp.eval_quad_value(sg_c)
        u, s = self.controls(t)
        _, dh, d2h = interp_gain(fv, prm.M)
        d2F = double_well(fv, prm.M)[2]
        gap = u - net_growth(sv, prm)
        mp = net_growth_prime(sv, prm)

        cache = {
            "phi": phi_c,
            "p": p_c,
            "mphi": self._mass @ phi_c,
            "dh_quad": dh,
            "ff": prm.lam * sp.lap_data + self._reaction(d2F + d2h * gap),
            "fs": self._reaction(-dh * mp),
            "sf": self._reaction(prm.gamma_ch * sv + s - prm.S_ch),
            "ss": prm.eta * sp.lap_data
                  + self._reaction(prm.gamma_h + prm.gamma_ch * fv),
        }
        self._cache_t, self._cache = t, cache
        self._op_cache = None
        return cache


class TangentAssembler(_LinearizedAssembler):
    """Forward system linearized about a trajectory, driven by dose changes.

    Parameters
    ----------
    base : StateInterpolant
        Trajectory the linearization is frozen at.
    controls : callable
        Dose rates of the base trajectory.
    perturbation : callable
        Maps a time to the dose-rate increments ``(dU, dS)``.
    """

    def __init__(self, space, params, base, controls, perturbation: Controls):
        super().__init__(space, params, base, controls)
        self.perturbation = perturbation

    def _system(self, t: float) -> dict:
        fr = self._frozen(t)
        if "csr" not in fr:
            sp = self.space
            ff = fr["ff"].copy()
            self._mask_phi(ff, 0.0)
            fs = fr["fs"].copy()
            self._mask_rows(fs)
            sf = fr["sf"].copy()
            self._mask_cols(sf)
            fr["masked"] = {"ff": ff, "fs": fs, "sf": sf}
            fr["csr"] = {
                "ff": sp.csr(ff), "fs": sp.csr(fs), "sf": sp.csr(sf),
                "ss": sp.csr(fr["ss"]),
                "pf": sp.csr(self._kpf_data), "pp": sp.csr(self._kpp_data),
            }
            fr["dh_gal"] = sp.galerkin_vector(fr["dh_quad"] * sp.W2)
        return fr

    def assemble(self, ydot, y, t, c_m, c_k, need_matrix=True) -> AssembledSystem:
        sys_ = self._system(t)
        C = sys_["csr"]
        du, ds = self.perturbation(t)
        f, sg, pv = self.split(y)
        fd, sd, pd = self.split(ydot)

        R = np.empty(self.n_dof)
        Rf, Rs, Rp = self.split(R)
        Rf[:] = self._mass @ fd + C["ff"] @ f + C["fs"] @ sg + du * sys_["dh_gal"]
        Rs[:] = self._mass @ sd + C["sf"] @ f + C["ss"] @ sg + ds * sys_["mphi"]
        Rp[:] = self._mass @ pd + C["pf"] @ f + C["pp"] @ pv
        Rf[self.space.boundary_idx] = f[self.space.boundary_idx]

        if not need_matrix:
            return AssembledSystem(R, None, None)
        op, diag = self._operator(t, c_m, c_k, sys_)
        return AssembledSystem(R, op, diag)

    def _operator(self, t, c_m, c_k, sys_):
        key = (t, c_m, c_k)
        if self._op_cache is not None and self._op_cache[0] == key:
            return self._op_cache[1], self._op_cache[2]
        sp = self.space
        m = sys_["masked"]
        dff = c_k * m["ff"] + c_m * self._mass_ff_data
        dff[self._bdiag_slots] = self._bdiag(c_m, c_k)
        dss = c_k * sys_["ss"] + c_m * sp.mass_data
        dpp = c_k * self._kpp_data + c_m * sp.mass_data
        blocks = [
            [sp.csr(dff), sp.csr(c_k * m["fs"]), None],
            [sp.csr(c_k * m["sf"]), sp.csr(dss), None],
            [sp.csr(c_k * self._kpf_data), None, sp.csr(dpp)],
        ]
        op = BlockOperator(blocks, self.n_b)
        diag = op.diagonal()
        self._op_cache = (key, op, diag)
        return op, diag


class AdjointAssembler(_LinearizedAssembler):
    """Backward-in-time dual system about a stored trajectory.

    Block placement is the exact transpose of the forward linearization,
    built from the same quadrature data. The rate term enters with a
    negative sign so the shared stepping code can march this system with
    a negative time increment. Sources follow the tracking objective:
    ``k1`` tracks the phase field against ``phi_Q`` over time and ``k4``
    penalizes the serum integral above ``p_omega``.
    """

    field_names = ("w", "z", "q")

    def __init__(self, space, params, base, controls,
                 k1=0.0, phi_Q=0.0, k4=0.0, p_omega=0.0):
        super().__init__(space, params, base, controls)
        self.k1 = float(k1)
        self.k4 = float(k4)
        # phase target: constant or coefficient field; either way the
        # source needs its moments against the basis
        if np.ndim(phi_Q) == 0:
            self._phi_q_moment = float(phi_Q) * space.w_int
        else:
            self._phi_q_moment = space.mass_matrix() @ np.asarray(phi_Q, float)
        # serum target: constant or callable series p_omega(t)
        if callable(p_omega):
            self._p_omega = p_omega
        else:
            self._p_omega = lambda t, v=float(p_omega): v

    def _system(self, t: float) -> dict:
        fr = self._frozen(t)
        if "csr" not in fr:
            sp = self.space
            ww = fr["ff"].copy()
            self._mask_phi(ww, 0.0)
            wz = fr["sf"].copy()
            self._mask_rows(wz)
            wq = self._kpf_raw.copy()
            self._mask_rows(wq)
            zw = fr["fs"].copy()
            self._mask_cols(zw)
            fr["masked"] = {"ww": ww, "wz": wz, "wq": wq, "zw": zw}
            fr["csr"] = {
                "ww": sp.csr(ww), "wz": sp.csr(wz), "wq": sp.csr(wq),
                "zw": sp.csr(zw), "zz": sp.csr(fr["ss"]),
                "qq": sp.csr(self._kpp_data),
            }
            serum_total = float(sp.w_int @ fr["p"])
            excess = max(serum_total - self._p_omega(t), 0.0)
            fr["src_w"] = self.k1 * (fr["mphi"] - self._phi_q_moment)
            fr["src_q"] = (self.k4 * excess) * sp.w_int
        return fr

    def assemble(self, ydot, y, t, c_m, c_k, need_matrix=True) -> AssembledSystem:
        sys_ = self._system(t)
        C = sys_["csr"]
        w, z, q = self.split(y)
        wd, zd, qd = self.split(ydot)

        R = np.empty(self.n_dof)
        Rw, Rz, Rq = self.split(R)
        Rw[:] = -(self._mass @ wd) + C["ww"] @ w + C["wz"] @ z + C["wq"] @ q \
            - sys_["src_w"]
        Rz[:] = -(self._mass @ zd) + C["zw"] @ w + C["zz"] @ z
        Rq[:] = -(self._mass @ qd) + C["qq"] @ q - sys_["src_q"]
        Rw[self.space.boundary_idx] = w[self.space.boundary_idx]

        if not need_matrix:
            return AssembledSystem(R, None, None)
        op, diag = self._operator(t, c_m, c_k, sys_)
        return AssembledSystem(R, op, diag)

    def _operator(self, t, c_m, c_k, sys_):
        key = (t, c_m, c_k)
        if self._op_cache is not None and self._op_cache[0] == key:
            return self._op_cache[1], self._op_cache[2]
        sp = self.space
        m = sys_["masked"]
        dww = c_k * m["ww"] - c_m * self._mass_ff_data
        dww[self._bdiag_slots] = self._bdiag(c_m, c_k)
        dzz = c_k * sys_["ss"] - c_m * sp.mass_data
        dqq = c_k * self._kpp_data - c_m * sp.mass_data
        blocks = [
            [sp.csr(dww), sp.csr(c_k * m["wz"]), sp.csr(c_k * m["wq"])],
            [sp.csr(c_k * m["zw"]), sp.csr(dzz), None],
            [None, None, sp.csr(dqq)],
        ]
        op = BlockOperator(blocks, self.n_b)
        diag = op.diagonal()
        self._op_cache = (key, op, diag)
        return op, diag
