"""Schedule optimization: dual solves, gradients, projected descent.

The descent treats both dose schedules as time-only signals on the
march grid. Each iteration runs the coupled system forward, solves the
dual system backward about that trajectory, assembles the objective
gradient from dual moments, and picks the best member of a pool of
projected trial steps. A linearized (tangent) solver provides an
independent check of the gradient for verification runs.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .assembly import AdjointAssembler, ForwardAssembler, TangentAssembler
from .forward import ForwardResult, solve_forward
from .linalg import gmres_solve
from .model import ControlTrajectory, ModelParams, interp_gain
from .objective import ObjectiveSpec, evaluate, serum_target_series, target_coeffs
from .splines import SplineSpace
from .timestepping import (
    AlphaScheme,
    SolverSettings,
    alpha_scheme,
    consistent_rate,
    march,
)


@dataclass
class AdjointResult:
    """Dual trajectory stored on the forward node grid (ascending)."""

    times: np.ndarray
    states: np.ndarray


@dataclass
class TangentResult:
    """Linearized response to a control perturbation, zero initial data."""

    times: np.ndarray
    states: np.ndarray


def _l2_sq(times: np.ndarray, series: np.ndarray) -> float:
    return float(np.trapezoid(series * series, times))


def _project_quad_values(space: SplineSpace, vals: np.ndarray) -> np.ndarray:
    """Projection of quadrature-point data onto the zero-trace subspace."""
    rhs = space.galerkin_vector(vals * space.W2)
    rhs[space.boundary_idx] = 0.0
    mat = space.csr(space.mass_data_constrained)
    res = gmres_solve(lambda x: mat @ x, rhs, mat.diagonal(),
                      eps_L=1e-13, max_iters=2000)
    return res.x


def terminal_adjoint_state(space: SplineSpace, spec: ObjectiveSpec,
                           phi_T: np.ndarray) -> np.ndarray:
    """Dual data at the final time, assembled from the terminal weights.

    The phase component is the zero-trace projection of
    k2*(phi(T) - phi_Omega) + k3; when the offset parts vanish the
    projection is the identity on the stored coefficients and is skipped.
    """
    nb = space.n_b
    yT = np.zeros(3 * nb)
    scalar_target = np.ndim(spec.phi_Omega) == 0
    if spec.k3 == 0.0 and scalar_target and float(spec.phi_Omega) == 0.0:
        yT[:nb] = spec.k2 * phi_T
    else:
        ref = target_coeffs(space, spec.phi_Omega)
        gq = spec.k2 * space.eval_quad_value(phi_T - ref) + spec.k3
        yT[:nb] = _project_quad_values(space, gq)
    yT[2 * nb:] = spec.k5
    return yT


def solve_adjoint(space: SplineSpace, params: ModelParams,
                  forward_res: ForwardResult, controls: ControlTrajectory,
                  spec: ObjectiveSpec, *,
                  scheme: Optional[AlphaScheme] = None,
                  settings: Optional[SolverSettings] = None) -> AdjointResult:
    """Backward dual march about a stored forward trajectory."""
    scheme = scheme or alpha_scheme(0.5)
    settings = settings or SolverSettings()
    times = forward_res.times
    n = times.size - 1
    asm = AdjointAssembler(space, params, forward_res.interpolant(),
                           controls.interp, k1=spec.k1, phi_Q=spec.phi_Q,
                           k4=spec.k4, p_omega=spec.p_Omega)
    t_final = float(times[-1])
    yT = terminal_adjoint_state(space, spec,
                                forward_res.final_state[:space.n_b])
    states = np.empty((n + 1, 3 * space.n_b))
    states[n] = yT
    if n == 0:
        return AdjointResult(times.copy(), states)
    dt = float(times[1] - times[0])
    ydotT = consistent_rate(asm, yT, t_final)
    march(asm, scheme, yT, ydotT, t_final, -dt, n, settings,
          observer=lambda k, t, y, yd: states.__setitem__(n - k, y))
    return AdjointResult(times.copy(), states)


def gradient_series(space: SplineSpace, params: ModelParams,
                    forward_res: ForwardResult, adjoint_res: AdjointResult,
                    controls: ControlTrajectory,
                    spec: ObjectiveSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Objective gradient with respect to both schedules, per time node.

    d_U = k6*U - <gain'(phi), w> and d_S = k7*S - <phi, z>, evaluated
    against the stored forward/dual pair on the shared node grid.
    """
    if forward_res.states is None:
        raise ValueError("gradient assembly needs a stored trajectory")
    nb = space.n_b
    n_nodes = forward_res.times.size
    d_U = np.empty(n_nodes)
    d_S = np.empty(n_nodes)
    for k in range(n_nodes):
        phi = forward_res.states[k][:nb]
        w = adjoint_res.states[k][:nb]
        z = adjoint_res.states[k][nb:2 * nb]
        dh_quad = interp_gain(space.eval_quad_value(phi), params.M)[1]
        gain_moment = space.galerkin_vector(dh_quad * space.W2)
        d_U[k] = spec.k6 * controls.U[k] - float(w @ gain_moment)
        d_S[k] = spec.k7 * controls.S[k] - space.integrate_product(phi, z)
    return d_U, d_S


def project_box(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Pointwise clamp of a scalar series into [lo, hi]."""
    if not lo <= hi:
        raise ValueError(f"empty box: [{lo}, {hi}]")
    return np.clip(values, lo, hi)


def select_candidate(pool_values) -> int:
    """Index of the smallest pool objective; ties go to the first."""
    return int(np.argmin(pool_values))


# -- steepest descent --------------------------------------------------------


@dataclass(frozen=True)
class DescentSettings:
    """Knobs of the projected steepest-descent loop."""

    n_mu: int = 10
    eps_sd1: float = 1e-6
    eps_sd2: float = 1e-6
    max_iters: int = 100
    mu_halvings: int = 2

    def __post_init__(self):
        if self.n_mu < 2:
            raise ValueError("step pool needs at least two members")
        if self.max_iters < 0 or self.mu_halvings < 0:
            raise ValueError("iteration budgets must be nonnegative")


@dataclass
class IterationRecord:
    """One accepted iterate of the descent loop."""

    iteration: int
    J: float
    terms: Dict[str, float]
    norm_dU: float
    norm_dS: float
    mu_star: float = 0.0
    criterion: str = ""


@dataclass
class DescentResult:
    controls: ControlTrajectory
    records: List[IterationRecord]
    forward: ForwardResult
    adjoint: AdjointResult
    gradient: Tuple[np.ndarray, np.ndarray]
    criterion: str


def _gradient_small(norm_sq: float, bound_sq: float) -> bool:
    # an exactly zero gradient counts as converged even against a zero
    # reference (strict inequality cannot see that case)
    return norm_sq == 0.0 or norm_sq < bound_sq


def steepest_descent(space: SplineSpace, params: ModelParams,
                     spec: ObjectiveSpec, y0: np.ndarray,
                     controls0: ControlTrajectory, *,
                     ydot0: Optional[np.ndarray] = None,
                     scheme: Optional[AlphaScheme] = None,
                     settings: Optional[SolverSettings] = None,
                     descent: Optional[DescentSettings] = None,
                     progress: Optional[Callable[[IterationRecord], None]] = None
                     ) -> DescentResult:
    """Projected steepest descent over both dose schedules.

    Every candidate evaluation is a full forward solve; the pool of
    trial steps uses mu_j = j/n_mu, candidates are clamped into the
    admissible box before evaluation, and the best pool member is
    accepted only if it does not increase the objective. When the whole
    pool increases it, the step grid is halved up to ``mu_halvings``
    times, after which the loop stops as stagnation-converged. The
    candidate evaluations are independent of evaluation order and are
    merged by pool index, so a serial sweep is deterministic.
    """
    descent = descent or DescentSettings()
    times = controls0.t
    dt = float(times[1] - times[0])
    duration = float(times[-1])
    if ydot0 is None:
        # one shared consistent start so pool candidates differ only in
        # their schedules
        ydot0 = consistent_rate(
            ForwardAssembler(space, params, controls0.interp), y0, 0.0)

    def run(U: np.ndarray, S: np.ndarray):
        ctr = controls0.copy_with(U=U, S=S)
        fwd = solve_forward(space, params, ctr.interp, y0, ydot0,
                            t0=0.0, dt=dt, duration=duration,
                            scheme=scheme, settings=settings, store=True)
        J, terms = evaluate(spec, space, fwd, ctr)
        return ctr, fwd, J, terms

    ctr, fwd, J, terms = run(controls0.U.copy(), controls0.S.copy())
    records: List[IterationRecord] = []
    dU_prev = dS_prev = None
    prevU_sq = prevS_sq = 0.0
    refU_sq = refS_sq = 0.0
    adj = None
    d_U = d_S = None
    criterion = "max_iters"

    for it in range(descent.max_iters + 1):
        adj = solve_adjoint(space, params, fwd, ctr, spec,
                            scheme=scheme, settings=settings)
        d_U, d_S = gradient_series(space, params, fwd, adj, ctr, spec)
        nU_sq = _l2_sq(times, d_U)
        nS_sq = _l2_sq(times, d_S)
        if it == 0:
            refU_sq, refS_sq = nU_sq, nS_sq

        rec = IterationRecord(it, J, terms, math.sqrt(nU_sq),
                              math.sqrt(nS_sq))
        records.append(rec)

        if (_gradient_small(nU_sq, descent.eps_sd1 * refU_sq)
                and _gradient_small(nS_sq, descent.eps_sd1 * refS_sq)):
            criterion = "criterion1"
        elif dU_prev is not None and (
                _gradient_small(_l2_sq(times, d_U - dU_prev),
                                descent.eps_sd2 * prevU_sq)
                and _gradient_small(_l2_sq(times, d_S - dS_prev),
                                    descent.eps_sd2 * prevS_sq)):
            criterion = "criterion2"
        elif it == descent.max_iters:
            criterion = "max_iters"
        else:
            criterion = ""

        if criterion:
            rec.criterion = criterion
            if progress:
                progress(rec)
            break

        # trial pool, halved on failure to descend
        accepted = None
        scale = 1.0
        for _ in range(descent.mu_halvings + 1):
            mus = scale * np.arange(1, descent.n_mu + 1) / descent.n_mu
            evaluated = {}
            pool = []
            for mu in mus:
                U_c = project_box(ctr.U - mu * d_U, 0.0, ctr.U_max)
                S_c = project_box(ctr.S - mu * d_S, 0.0, ctr.S_max)
                key = (U_c.tobytes(), S_c.tobytes())
                if key not in evaluated:
                    evaluated[key] = run(U_c, S_c)
                pool.append(evaluated[key])
            j_star = select_candidate([entry[2] for entry in pool])
            if pool[j_star][2] <= J:
                accepted = (float(mus[j_star]), pool[j_star])
                break
            scale *= 0.5
        if accepted is None:
            criterion = "stagnation"
            rec.criterion = criterion
            if progress:
                progress(rec)
            break

        rec.mu_star, (ctr, fwd, J, terms) = accepted
        if progress:
            progress(rec)
        dU_prev, dS_prev = d_U, d_S
        prevU_sq, prevS_sq = nU_sq, nS_sq

    return DescentResult(ctr, records, fwd, adj, (d_U, d_S), criterion)


# -- optimality reporting ----------------------------------------------------


@dataclass
class KktReport:
    """Pointwise stationarity check of a candidate optimum."""

    times: np.ndarray
    u_target: np.ndarray       # Proj of the dual moment / k6
    s_target: np.ndarray
    u_residual: np.ndarray     # |U - u_target|
    s_residual: np.ndarray
    interior_u: np.ndarray     # strict-interior masks
    interior_s: np.ndarray
    gap_u: np.ndarray          # |k6 U - dual moment|
    gap_s: np.ndarray

    @property
    def max_residual_u(self) -> float:
        return float(self.u_residual.max())

    @property
    def max_residual_s(self) -> float:
        return float(self.s_residual.max())

    def max_interior_gap(self) -> Tuple[float, float]:
        gu = float(self.gap_u[self.interior_u].max()) \
            if self.interior_u.any() else 0.0
        gs = float(self.gap_s[self.interior_s].max()) \
            if self.interior_s.any() else 0.0
        return gu, gs


def verify_kkt(space: SplineSpace, params: ModelParams,
               forward_res: ForwardResult, adjoint_res: AdjointResult,
               controls: ControlTrajectory, spec: ObjectiveSpec) -> KktReport:
    """Compare both schedules with their projected stationarity maps."""
    if spec.k6 <= 0.0 or spec.k7 <= 0.0:
        raise ValueError("stationarity maps need positive dose penalties")
    d_U, d_S = gradient_series(space, params, forward_res, adjoint_res,
                               controls, spec)
    # recover the dual moments from the gradient definition
    moment_u = spec.k6 * controls.U - d_U
    moment_s = spec.k7 * controls.S - d_S
    u_target = project_box(moment_u / spec.k6, 0.0, controls.U_max)
    s_target = project_box(moment_s / spec.k7, 0.0, controls.S_max)
    eps_u = 1e-9 * controls.U_max
    eps_s = 1e-9 * controls.S_max
    return KktReport(
        times=controls.t.copy(),
        u_target=u_target, s_target=s_target,
        u_residual=np.abs(controls.U - u_target),
        s_residual=np.abs(controls.S - s_target),
        interior_u=(controls.U > eps_u) & (controls.U < controls.U_max - eps_u),
        interior_s=(controls.S > eps_s) & (controls.S < controls.S_max - eps_s),
        gap_u=np.abs(spec.k6 * controls.U - moment_u),
        gap_s=np.abs(spec.k7 * controls.S - moment_s),
    )


# -- tangent verification ----------------------------------------------------


def tangent_solve(space: SplineSpace, params: ModelParams,
                  forward_res: ForwardResult, controls: ControlTrajectory,
                  u_dir: np.ndarray, s_dir: np.ndarray, *,
                  scheme: Optional[AlphaScheme] = None,
                  settings: Optional[SolverSettings] = None) -> TangentResult:
    """Linearized trajectory for a schedule perturbation, zero ICs.

    Verification-only path; the descent loop never calls it.
    """
    times = forward_res.times
    n = times.size - 1
    u_dir = np.asarray(u_dir, dtype=float)
    s_dir = np.asarray(s_dir, dtype=float)
    if u_dir.shape != times.shape or s_dir.shape != times.shape:
        raise ValueError("direction series must live on the march grid")

    def pert(t: float):
        return (float(np.interp(t, times, u_dir)),
                float(np.interp(t, times, s_dir)))

    scheme = scheme or alpha_scheme(0.5)
    settings = settings or SolverSettings()
    asm = TangentAssembler(space, params, forward_res.interpolant(),
                           controls.interp, pert)
    y0 = np.zeros(3 * space.n_b)
    states = np.empty((n + 1, 3 * space.n_b))
    states[0] = y0
    if n == 0:
        return TangentResult(times.copy(), states)
    dt = float(times[1] - times[0])
    ydot0 = consistent_rate(asm, y0, 0.0)
    march(asm, scheme, y0, ydot0, 0.0, dt, n, settings,
          observer=lambda k, t, y, yd: states.__setitem__(k, y))
    return TangentResult(times.copy(), states)


def tracking_gateaux_from_tangent(spec: ObjectiveSpec, space: SplineSpace,
                                  forward_res: ForwardResult,
                                  tangent_res: TangentResult) -> float:
    """Directional derivative of the tracking terms via the tangent run."""
    nb = space.n_b
    times = forward_res.times
    total = 0.0
    if spec.k1 > 0.0:
        ref = target_coeffs(space, spec.phi_Q)
        series = np.array([
            space.integrate_product(forward_res.states[k][:nb] - ref,
                                    tangent_res.states[k][:nb])
            for k in range(times.size)])
        total += spec.k1 * float(np.trapezoid(series, times))
    phi_T = forward_res.final_state[:nb]
    tan_T = tangent_res.states[-1]
    if spec.k2 > 0.0:
        ref = target_coeffs(space, spec.phi_Omega)
        total += spec.k2 * space.integrate_product(phi_T - ref, tan_T[:nb])
    if spec.k3 > 0.0:
        total += spec.k3 * space.integrate_field(tan_T[:nb])
    if spec.k4 > 0.0:
        excess = np.maximum(
            forward_res.serum_total - serum_target_series(spec, times), 0.0)
        p_dir = np.array([space.integrate_field(tangent_res.states[k][2 * nb:])
                          for k in range(times.size)])
        total += spec.k4 * float(np.trapezoid(excess * p_dir, times))
    if spec.k5 > 0.0:
        total += spec.k5 * space.integrate_field(tan_T[2 * nb:])
    return total


def tracking_gateaux_from_adjoint(times: np.ndarray,
                                  controls: ControlTrajectory,
                                  spec: ObjectiveSpec,
                                  gradient: Tuple[np.ndarray, np.ndarray],
                                  u_dir: np.ndarray,
                                  s_dir: np.ndarray) -> float:
    """Same directional derivative assembled from dual moments."""
    d_U, d_S = gradient
    integrand = (d_U - spec.k6 * controls.U) * u_dir \
        + (d_S - spec.k7 * controls.S) * s_dir
    return float(np.trapezoid(integrand, times))


def directional_derivative(times: np.ndarray,
                           gradient: Tuple[np.ndarray, np.ndarray],
                           u_dir: np.ndarray, s_dir: np.ndarray) -> float:
    """Full <grad J, direction> pairing on the march grid."""
    d_U, d_S = gradient
    return float(np.trapezoid(d_U * u_dir + d_S * s_dir, times))
