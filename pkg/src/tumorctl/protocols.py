"""Protocol fitting: dose schedules matched to optimal effect curves.

A realizable drug protocol is a small set of bolus doses with a shared
exponential decay.  This module fits protocol parameters (doses,
delivery times, optionally the decay constant) to a sampled effect
curve by bound-constrained nonlinear least squares, scores fits, and
simulates a fitted protocol through the forward model.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forward import ForwardResult, solve_forward
from .model import DrugProtocol, ModelParams, protocol_effect

__all__ = [
    "FitProblem",
    "FitResult",
    "ProtocolEvaluation",
    "evaluate_protocol",
    "fit",
    "goodness_of_fit",
]

# weight of the soft constraint keeping composite delivery times within
# the admissible window when gap coordinates would push past it
_TIME_PENALTY = 1.0e3


def goodness_of_fit(target, fitted):
    """Score a fitted series against a target series.

    Parameters
    ----------
    target, fitted : array_like
        Equal-length sample series; the coefficient of determination is
        taken about the mean of `target`.

    Returns
    -------
    r2 : float or None
        1 - SS_res/SS_tot, or None when the target is constant and the
        ratio is undefined.
    rmse : float
        Root mean squared difference.
    """
    a = np.asarray(target, dtype=float)
    b = np.asarray(fitted, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("series must be equal-length 1-D samples")
    diff = b - a
    rmse = float(np.sqrt(np.mean(diff * diff)))
    ss_res = float(diff @ diff)
    centered = a - a.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        return None, rmse
    return 1.0 - ss_res / ss_tot, rmse


@dataclass
class FitProblem:
    """Bound-constrained least-squares setup for one protocol template.

    The template is picked by `n_doses` (1 or 3) and `free_tau`.  The
    first delivery time stays fixed at its start value; later delivery
    times are free and kept ordered through nonnegative gap coordinates.
    """

    times: np.ndarray
    target: np.ndarray
    n_doses: int = 1
    free_tau: bool = False
    beta: float = 1.59e-2
    tau_start: float = 5.0
    m_ref_factor: bool = True
    m_ref: float = 7.55e-2
    dose_bounds: tuple = (0.0, 100.0)
    time_bounds: tuple = (0.0, 21.0)
    tau_bounds: tuple = (1.0, 20.0)
    start_doses: Optional[tuple] = None
    start_times: Optional[tuple] = None
    tol: float = 1e-8
    max_iters: int = 200

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("need a 1-D sample grid with at least 2 points")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.target.shape != self.times.shape:
            raise ValueError("target must match the sample grid")
        if not np.all(np.isfinite(self.target)):
            raise ValueError("target samples must be finite")
        if self.n_doses not in (1, 3):
            raise ValueError("protocol templates carry 1 or 3 doses")
        for lo, hi in (self.dose_bounds, self.time_bounds, self.tau_bounds):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("bounds must be finite with lo < hi")
        if self.start_doses is None:
            self.start_doses = (75.0,) if self.n_doses == 1 else (25.0,) * 3
        if self.start_times is None:
            self.start_times = (0.0,) if self.n_doses == 1 else (0.0, 7.0, 14.0)
        self.start_doses = tuple(float(d) for d in self.start_doses)
        self.start_times = tuple(float(t) for t in self.start_times)
        if len(self.start_doses) != self.n_doses:
            raise ValueError("start doses must match the template size")
        if len(self.start_times) != self.n_doses:
            raise ValueError("start times must match the template size")
        if not (self.tau_start > 0 and self.beta > 0):
            raise ValueError("tau and beta must be positive")
        theta, lo, hi = self._pack_start()
        if np.any(theta < lo) or np.any(theta > hi):
            raise ValueError("start values violate the parameter bounds")

    # internal coordinates: doses, then gaps between delivery times
    # (3-dose only), then tau when free

    def _pack_start(self):
        theta = list(self.start_doses)
        lo = [self.dose_bounds[0]] * self.n_doses
        hi = [self.dose_bounds[1]] * self.n_doses
        if self.n_doses == 3:
            t1, t2, t3 = self.start_times
            theta += [t2 - t1, t3 - t2]
            lo += [0.0, 0.0]
            hi += [self.time_bounds[1], self.time_bounds[1]]
        if self.free_tau:
            theta.append(self.tau_start)
            lo.append(self.tau_bounds[0])
            hi.append(self.tau_bounds[1])
        return np.array(theta), np.array(lo), np.array(hi)

    def _delivery_times(self, theta):
        t1 = self.start_times[0]
        if self.n_doses == 1:
            return (t1,)
        return (t1, t1 + theta[3], t1 + theta[3] + theta[4])

    def _tau(self, theta):
        return float(theta[-1]) if self.free_tau else self.tau_start

    def protocol_at(self, theta) -> DrugProtocol:
        """Materialize the protocol encoded by an internal vector."""
        return DrugProtocol(
            kind="cytotoxic",
            doses=tuple(float(d) for d in theta[:self.n_doses]),
            times=self._delivery_times(theta),
            tau=self._tau(theta),
            beta=self.beta,
            m_ref_factor=self.m_ref_factor,
            m_ref=self.m_ref,
        )

    def residual_jacobian(self, theta):
        """Residual vector and its analytic Jacobian at `theta`.

        One extra row softly penalizes a final delivery time past the
        admissible window, which the gap coordinates cannot box in.
        """
        c = self.m_ref if self.m_ref_factor else 1.0
        tau = self._tau(theta)
        t_i = self._delivery_times(theta)
        t = self.times
        n = t.size
        m = theta.size
        effect = np.zeros(n)
        cols_d = []
        cols_t = []
        for i in range(self.n_doses):
            decay = np.where(t >= t_i[i], np.exp(-(t - t_i[i]) / tau), 0.0)
            cols_d.append(c * self.beta * decay)
            cols_t.append(c * self.beta * theta[i] / tau * decay)
            effect = effect + theta[i] * c * self.beta * decay
        r = np.empty(n + 1)
        r[:n] = effect - self.target
        J = np.zeros((n + 1, m))
        for i in range(self.n_doses):
            J[:n, i] = cols_d[i]
        if self.n_doses == 3:
            # gap coordinates: moving g2 shifts doses 2 and 3 together
            J[:n, 3] = cols_t[1] + cols_t[2]
            J[:n, 4] = cols_t[2]
        if self.free_tau:
            accum = np.zeros(n)
            for i in range(self.n_doses):
                accum += cols_d[i] * theta[i] * (t - t_i[i]) / tau ** 2
            J[:n, m - 1] = accum
        overshoot = t_i[-1] - self.time_bounds[1]
        if overshoot > 0.0:
            r[n] = _TIME_PENALTY * overshoot
            if self.n_doses == 3:
                J[n, 3] = _TIME_PENALTY
                J[n, 4] = _TIME_PENALTY
        else:
            r[n] = 0.0
        if not np.all(np.isfinite(r)):
            raise ValueError("residuals are not finite")
        return r, J


@dataclass
class FitResult:
    """Fitted protocol with convergence data and fit quality."""

    protocol: DrugProtocol
    theta: np.ndarray
    r2: Optional[float]
    rmse: float
    sse: float
    n_iters: int
    converged: bool
    reason: str
    sse_history: np.ndarray = field(repr=False, default=None)


def _seed_scan(problem: FitProblem):
    """Best activation-cell start for the multi-dose templates.

    Sampled targets cannot separate a delivery time from its dose:
    inside one sample cell the effect curve is invariant under
    t_i -> t_i + delta, d_i -> d_i exp(-delta/tau).  What the samples
    do determine is each dose's activation sample and amplitude, so the
    seed scan walks every ordered pair of candidate activation samples
    (and a decay grid when tau is free), solves the then-linear dose
    problem in closed form, and returns the lowest-residual start.
    """
    if problem.n_doses != 3 and not problem.free_tau:
        return None
    t = problem.times
    y = problem.target
    t1 = problem.start_times[0]
    lo_t, hi_t = problem.time_bounds
    cands = t[(t >= max(lo_t, t1)) & (t <= hi_t)]
    if problem.free_tau:
        lo_tau, hi_tau = problem.tau_bounds
        taus = np.unique(np.concatenate([
            np.geomspace(lo_tau, hi_tau, 13), [problem.tau_start]]))
    else:
        taus = np.array([problem.tau_start])
    d_hi = problem.dose_bounds[1]
    best = None
    for tau in taus:
        D = np.where(t[:, None] >= cands[None, :],
                     np.exp(-(t[:, None] - cands[None, :]) / tau), 0.0)
        col1 = np.where(t >= t1, np.exp(-(t - t1) / tau), 0.0)
        if problem.n_doses == 1:
            num = col1 @ y
            den = col1 @ col1
            c = problem.m_ref if problem.m_ref_factor else 1.0
            d1 = np.clip(num / (den * c * problem.beta), 0.0, d_hi)
            r = d1 * c * problem.beta * col1 - y
            sse = float(r @ r)
            if best is None or sse < best[0]:
                best = (sse, (d1,), (t1,), float(tau))
            continue
        # 3 doses: batched 3x3 normal equations over sample pairs
        c = problem.m_ref if problem.m_ref_factor else 1.0
        scale = c * problem.beta
        G = D.T @ D
        g1 = D.T @ col1
        b = D.T @ y
        c11 = float(col1 @ col1)
        b1 = float(col1 @ y)
        ii, jj = np.triu_indices(cands.size, k=1)
        P = ii.size
        A = np.empty((P, 3, 3))
        A[:, 0, 0] = c11
        A[:, 0, 1] = A[:, 1, 0] = g1[ii]
        A[:, 0, 2] = A[:, 2, 0] = g1[jj]
        A[:, 1, 1] = G[ii, ii]
        A[:, 2, 2] = G[jj, jj]
        A[:, 1, 2] = A[:, 2, 1] = G[ii, jj]
        rhs = np.empty((P, 3))
        rhs[:, 0] = b1
        rhs[:, 1] = b[ii]
        rhs[:, 2] = b[jj]
        ridge = 1e-10 * np.trace(A, axis1=1, axis2=2)[:, None, None] / 3.0
        A += ridge * np.eye(3)
        amps = np.linalg.solve(A, rhs[:, :, None])[:, :, 0]
        doses = np.clip(amps / scale, 0.0, d_hi)
        amps_c = doses * scale
        # residual norm at the clipped amplitudes, in closed form
        yy = float(y @ y)
        quad = np.einsum("pi,pij,pj->p", amps_c, A, amps_c)
        lin = np.einsum("pi,pi->p", amps_c, rhs)
        sse_all = yy - 2.0 * lin + quad
        k = int(np.argmin(sse_all))
        if best is None or sse_all[k] < best[0]:
            best = (float(sse_all[k]), tuple(doses[k]),
                    (t1, float(cands[ii[k]]), float(cands[jj[k]])),
                    float(tau))
    if best is not None and problem.free_tau and problem.n_doses == 3:
        best = _refine_tau(problem, best)
    return best


def _dose_solve(problem: FitProblem, ts, tau):
    """Clipped closed-form dose solve with delivery times held fixed."""
    t = problem.times
    y = problem.target
    c = problem.m_ref if problem.m_ref_factor else 1.0
    scale = c * problem.beta
    cols = np.stack([
        np.where(t >= ti, np.exp(-(t - ti) / tau), 0.0) for ti in ts], axis=1)
    A = cols.T @ cols
    A += 1e-10 * np.trace(A) / 3.0 * np.eye(len(ts))
    amps = np.linalg.solve(A, cols.T @ y)
    doses = np.clip(amps / scale, *problem.dose_bounds)
    r = cols @ (doses * scale) - y
    return float(r @ r), tuple(doses)


def _refine_tau(problem: FitProblem, best):
    """Golden-section decay refinement around the best grid seed.

    With activation cells frozen the projected objective is smooth in
    tau alone, so a 1-D search closes the seed grid's gap, which the
    damped polish cannot do across the dose/time/decay trade valley.
    """
    sse0, doses0, ts, tau0 = best
    lo = max(problem.tau_bounds[0], tau0 / 1.6)
    hi = min(problem.tau_bounds[1], tau0 * 1.6)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, _ = _dose_solve(problem, ts, c1)
    f2, _ = _dose_solve(problem, ts, c2)
    for _ in range(70):
        if f1 < f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1, _ = _dose_solve(problem, ts, c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2, _ = _dose_solve(problem, ts, c2)
    tau = 0.5 * (a + b)
    sse, doses = _dose_solve(problem, ts, tau)
    if sse < sse0:
        return (sse, doses, ts, tau)
    return best


def _canonicalize_times(problem: FitProblem, theta, lo, hi, sse):
    """Shift delivery times onto their activation samples.

    Moves each free delivery time up to the first sample at or after it
    while rescaling its dose along the exact within-cell invariance;
    the residual is unchanged up to roundoff, and the reported times
    become well-defined representatives of the flat optimum.
    """
    if problem.n_doses == 1:
        return theta, sse
    tau = problem._tau(theta)
    t_i = list(problem._delivery_times(theta))
    doses = [float(d) for d in theta[:3]]
    t = problem.times
    changed = False
    for i in (1, 2):
        k = int(np.searchsorted(t, t_i[i]))
        if k >= t.size:
            continue
        s = float(t[k])
        if s != t_i[i]:
            doses[i] *= np.exp(-(s - t_i[i]) / tau)
            t_i[i] = s
            changed = True
    if not changed:
        return theta, sse
    cand = theta.copy()
    cand[:3] = doses
    cand[3] = t_i[1] - t_i[0]
    cand[4] = t_i[2] - t_i[1]
    cand = np.clip(cand, lo, hi)
    rc, _ = problem.residual_jacobian(cand)
    sse_c = float(rc @ rc)
    if sse_c <= sse * (1.0 + 1e-9) + 1e-300:
        return cand, sse_c
    return theta, sse


def fit(problem: FitProblem) -> FitResult:
    """Fit a protocol template to the target curve.

    Starts from the better of the template's standard start and a
    deterministic activation-cell seed, then runs damped-normal-
    equations least squares with Marquardt diagonal scaling, feasible-
    box projection, and step backtracking; accepted steps never
    increase the squared-residual objective.  Stops at projected-
    gradient stationarity below `problem.tol`, after
    `problem.max_iters` iterations, or when damping saturates.  The
    result is canonicalized so free delivery times sit on activation
    samples of the target grid.
    """
    theta, lo, hi = problem._pack_start()
    seed = _seed_scan(problem)
    if seed is not None:
        r0, _ = problem.residual_jacobian(theta)
        if seed[0] < float(r0 @ r0):
            _, sd_d, sd_t, sd_tau = seed
            cand = list(sd_d)
            if problem.n_doses == 3:
                cand += [sd_t[1] - sd_t[0], sd_t[2] - sd_t[1]]
            if problem.free_tau:
                cand.append(sd_tau)
            theta = np.clip(np.array(cand), lo, hi)
    r, J = problem.residual_jacobian(theta)
    sse = float(r @ r)
    history = [sse]
    lam = 1e-3
    reason = "max_iters"
    converged = False
    iters = 0
    for iters in range(1, problem.max_iters + 1):
        g = J.T @ r
        stationarity = np.max(np.abs(np.clip(theta - g, lo, hi) - theta))
        if stationarity < problem.tol:
            reason = "stationary"
            converged = True
            break
        # coordinates pinned at a bound with the gradient pointing out
        # are frozen this iteration; damping them in the normal system
        # would contaminate the step for the remaining coordinates
        free = ~(((theta <= lo) & (g > 0)) | ((theta >= hi) & (g < 0)))
        A = (J[:, free]).T @ J[:, free]
        gf = g[free]
        d = np.diag(A).copy()
        floor = 1e-12 * max(float(d.max()), 1.0)
        d[d < floor] = floor
        accepted = False
        while lam < 1e14:
            step = np.linalg.solve(A + lam * np.diag(d), -gf)
            # sampled delivery times make the objective piecewise smooth
            # with jumps where a time crosses a sample; a backtracking
            # scan salvages steps whose full length lands past a jump
            for alpha in (1.0, 0.5, 0.25, 0.125):
                cand = theta.copy()
                cand[free] += alpha * step
                cand = np.clip(cand, lo, hi)
                rc, Jc = problem.residual_jacobian(cand)
                sse_c = float(rc @ rc)
                if sse_c < sse:
                    theta, r, J, sse = cand, rc, Jc, sse_c
                    history.append(sse)
                    lam = max(lam / 3.0, 1e-12)
                    accepted = True
                    break
            if accepted:
                break
            lam *= 10.0
        if not accepted:
            reason = "stalled"
            break
    theta, sse = _canonicalize_times(problem, theta, lo, hi, sse)
    theta, sse = _polish_bounds(problem, theta, lo, hi, sse)
    history.append(sse)
    protocol = _canonical(problem, theta)
    fitted = protocol_effect(protocol, problem.times)
    r2, rmse = goodness_of_fit(problem.target, fitted)
    return FitResult(protocol=protocol, theta=theta, r2=r2, rmse=rmse,
                     sse=sse, n_iters=iters, converged=converged,
                     reason=reason, sse_history=np.array(history))


def _polish_bounds(problem: FitProblem, theta, lo, hi, sse):
    """Snap coordinates onto a bound when the exact value helps.

    Damped steps approach an active bound geometrically without ever
    landing on it; one greedy coordinate pass closes the gap whenever
    a bound value strictly lowers the squared residual.
    """
    for j in range(theta.size):
        for bound in (lo[j], hi[j]):
            if theta[j] == bound:
                continue
            cand = theta.copy()
            cand[j] = bound
            rc, _ = problem.residual_jacobian(cand)
            sse_c = float(rc @ rc)
            if sse_c < sse:
                theta, sse = cand, sse_c
    return theta, sse


def _canonical(problem: FitProblem, theta) -> DrugProtocol:
    """Protocol at `theta` with dose/time pairs sorted by delivery."""
    raw = problem.protocol_at(theta)
    order = np.argsort(raw.times, kind="stable")
    return DrugProtocol(
        kind=raw.kind,
        doses=tuple(raw.doses[i] for i in order),
        times=tuple(raw.times[i] for i in order),
        tau=raw.tau,
        beta=raw.beta,
        m_ref_factor=raw.m_ref_factor,
        m_ref=raw.m_ref,
    )


@dataclass
class ProtocolEvaluation:
    """Quantities of interest from simulating a fitted protocol."""

    result: ForwardResult
    v_phi_r2: Optional[float] = None
    v_phi_rmse: Optional[float] = None
    serum_r2: Optional[float] = None
    serum_rmse: Optional[float] = None

    @property
    def times(self):
        return self.result.times

    @property
    def v_phi(self):
        return self.result.v_phi

    @property
    def serum_total(self):
        return self.result.serum_total


def evaluate_protocol(space, params: ModelParams, protocol: DrugProtocol,
                      y0, *, dt=0.1, duration=21.0,
                      reference: Optional[ForwardResult] = None,
                      ydot0=None, scheme=None, settings=None,
                      store=False) -> ProtocolEvaluation:
    """Simulate a protocol (no antiangiogenic dosing) and score its QoI.

    Runs the forward model with the protocol's effect curve as the
    cytotoxic control and zero antiangiogenic control.  When a
    `reference` run on the same time grid is supplied, the tumor-volume
    and serum series are scored against it.
    """

    def controls(t):
        return float(protocol_effect(protocol, t)), 0.0

    result = solve_forward(space, params, controls, y0, ydot0=ydot0,
                           dt=dt, duration=duration, scheme=scheme,
                           settings=settings, store=store)
    ev = ProtocolEvaluation(result=result)
    if reference is not None:
        if reference.times.shape != result.times.shape or not np.allclose(
                reference.times, result.times, rtol=1e-12, atol=1e-12):
            raise ValueError("reference run lives on a different time grid")
        ev.v_phi_r2, ev.v_phi_rmse = goodness_of_fit(
            reference.v_phi, result.v_phi)
        ev.serum_r2, ev.serum_rmse = goodness_of_fit(
            reference.serum_total, result.serum_total)
    return ev
