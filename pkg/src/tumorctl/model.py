"""Model constants, closure functions and drug delivery protocols.

Everything here is pointwise algebra: the reaction closures of the tumor
system (double well, proliferation interpolation, nutrient-modulated net
growth rate) and the exponential-decay drug protocols used both for
initial control guesses and for protocol fitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelParams",
    "DrugProtocol",
    "ControlTrajectory",
    "double_well",
    "interp_gain",
    "net_growth",
    "net_growth_prime",
    "healthy_state",
    "protocol_effect",
    "docetaxel_reference",
    "antiangiogenic_reference",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the tumor / nutrient / serum system.

    Defaults are the baseline aggressive-case values (length in microns,
    time in days, nutrient in g/L). `sigma_l` and `sigma_r` position the
    arctan switch of the net growth rate: the defaults put the crossover
    near the starved-core nutrient level `S_c / gamma_c` and saturation
    near the healthy-tissue level `S_h / gamma_h`.
    """

    lam: float = 640.0            # phase field diffusivity, um^2/day
    M: float = 2.5                # energy scale of the double well
    m_ref: float = 7.55e-2        # net growth rate scale, 1/day
    Kbar_rho: float = 1.5e-2      # proliferation normalization, 1/day
    K_rho: float = 1.5e-2         # proliferation rate, 1/day
    Kbar_A: float = 2.1e-2        # apoptosis normalization, 1/day
    K_A: float = 1.37e-2          # apoptosis rate, 1/day
    sigma_l: float = 0.2          # nutrient reference level, g/L
    sigma_r: float = 0.1          # nutrient switch width, g/L
    eta: float = 6.4e4            # nutrient diffusivity, um^2/day
    S_h: float = 2.0              # healthy nutrient supply, g/L/day
    S_c: float = 2.75             # tumor nutrient supply, g/L/day
    gamma_h: float = 2.0          # healthy nutrient uptake, 1/day
    gamma_c: float = 17.0         # tumor nutrient uptake, 1/day
    D: float = 640.0              # serum marker diffusivity, um^2/day
    alpha_h: float = 1.712e-2     # healthy marker production
    alpha_c: float = 15 * 1.712e-2  # tumor marker production
    gamma_p: float = 0.274        # marker decay, 1/day

    def __post_init__(self):
        positive = (
            "lam", "M", "m_ref", "Kbar_rho", "K_rho", "Kbar_A", "K_A",
            "sigma_r", "eta", "gamma_h", "gamma_c", "D", "alpha_h",
            "alpha_c", "gamma_p",
        )
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"parameter {name} must be a positive finite number, got {v!r}")
        for name in ("sigma_l", "S_h", "S_c"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"parameter {name} must be nonnegative, got {v!r}")

    # derived combinations used all over the weak forms
    @property
    def gamma_ch(self) -> float:
        return self.gamma_c - self.gamma_h

    @property
    def alpha_ch(self) -> float:
        return self.alpha_c - self.alpha_h

    @property
    def S_ch(self) -> float:
        return self.S_c - self.S_h

    @property
    def rho(self) -> float:
        return self.K_rho / self.Kbar_rho

    @property
    def A(self) -> float:
        return -self.K_A / self.Kbar_A

    def with_overrides(self, **kw) -> "ModelParams":
        return replace(self, **kw)


# The closures take the energy scale explicitly so tests can call them
# without a params object.

def _dw(phi, M):
    F = M * phi * phi * (1.0 - phi) ** 2
    dF = 2.0 * M * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
    d2F = 2.0 * M * (1.0 - 6.0 * phi * (1.0 - phi))
    return F, dF, d2F


def _hg(phi, M):
    h = M * phi * phi * (3.0 - 2.0 * phi)
    dh = 6.0 * M * phi * (1.0 - phi)
    d2h = 6.0 * M * (1.0 - 2.0 * phi)
    return h, dh, d2h


def double_well(phi, M=2.5):
    """Double well potential M phi^2 (1-phi)^2 and its first two derivatives."""
    phi = np.asarray(phi, dtype=float)
    return _dw(phi, float(M))


def interp_gain(phi, M=2.5):
    """Proliferation interpolation M phi^2 (3-2 phi) and derivatives.

    Its derivative 6 M phi (1-phi) localizes every growth and drug term
    on the diffuse tumor interface.
    """
    phi = np.asarray(phi, dtype=float)
    return _hg(phi, float(M))


def net_growth(sigma, params: ModelParams):
    """Nutrient-modulated net growth rate (proliferation minus apoptosis)."""
    sigma = np.asarray(sigma, dtype=float)
    rho, A = params.rho, params.A
    return params.m_ref * (
        0.5 * (rho + A)
        + (rho - A) / np.pi * np.arctan((sigma - params.sigma_l) / params.sigma_r)
    )


def net_growth_prime(sigma, params: ModelParams):
    """Derivative of the net growth rate with respect to nutrient."""
    sigma = np.asarray(sigma, dtype=float)
    s = (sigma - params.sigma_l) / params.sigma_r
    return params.m_ref * (params.rho - params.A) / (np.pi * params.sigma_r * (1.0 + s * s))


def healthy_state(params: ModelParams):
    """Spatially uniform tumor-free equilibrium (phi, nutrient, marker)."""
    return 0.0, params.S_h / params.gamma_h, params.alpha_h / params.gamma_p


@dataclass(frozen=True)
class DrugProtocol:
    """Sum of exponentially decaying doses, one decay constant per drug.

    Effect at time t is scale * beta * sum_i dose_i exp(-(t - t_i)/tau)
    for t >= t_i, where scale is `m_ref` when `m_ref_factor` is set
    (cytotoxic drugs act through the growth-rate scale) and 1 otherwise.
    A dose delivered exactly at t contributes from t on.
    """

    kind: str
    doses: tuple
    times: tuple
    tau: float
    beta: float
    m_ref_factor: bool = False
    m_ref: float = 7.55e-2

    def __post_init__(self):
        if len(self.doses) != len(self.times):
            raise ValueError("doses and delivery times must pair up")
        if len(self.doses) == 0:
            raise ValueError("protocol needs at least one dose")
        if any(d < 0 for d in self.doses):
            raise ValueError("doses must be nonnegative")
        if any(t < 0 for t in self.times):
            raise ValueError("delivery times must be nonnegative")
        if list(self.times) != sorted(self.times):
            raise ValueError("delivery times must be sorted")
        if not (self.tau > 0 and self.beta > 0):
            raise ValueError("tau and beta must be positive")

    @property
    def scale(self) -> float:
        return self.m_ref if self.m_ref_factor else 1.0


def protocol_effect(protocol: DrugProtocol, t):
    """Evaluate the protocol's pharmacodynamic effect at times t."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for d, ti in zip(protocol.doses, protocol.times):
        active = t >= ti
        out = out + np.where(active, d * np.exp(-(t - ti) / protocol.tau), 0.0)
    return protocol.scale * protocol.beta * out


def docetaxel_reference(params: ModelParams, dose: float = 75.0) -> DrugProtocol:
    """Single reference cytotoxic dose at t = 0 (tau 5 d, beta 1.59e-2)."""
    return DrugProtocol(
        kind="cytotoxic", doses=(float(dose),), times=(0.0,),
        tau=5.0, beta=1.59e-2, m_ref_factor=True, m_ref=params.m_ref,
    )


def antiangiogenic_reference(dose: float = 15.0) -> DrugProtocol:
    """Single reference antiangiogenic dose at t = 0 (tau 30 d, beta 0.04)."""
    return DrugProtocol(
        kind="antiangiogenic", doses=(float(dose),), times=(0.0,),
        tau=30.0, beta=0.04, m_ref_factor=False,
    )


@dataclass
class ControlTrajectory:
    """Both controls sampled on the uniform march grid.

    U is the cytotoxic effect (same units as the net growth rate), S the
    nutrient-supply reduction. Values live in the admissible boxes
    [0, U_max] x [0, S_max].
    """

    t: np.ndarray
    U: np.ndarray
    S: np.ndarray
    U_max: float
    S_max: float

    def __post_init__(self):
        self.t = np.ascontiguousarray(self.t, dtype=float)
        self.U = np.ascontiguousarray(self.U, dtype=float)
        self.S = np.ascontiguousarray(self.S, dtype=float)
        if self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("control grid needs at least two samples")
        if self.U.shape != self.t.shape or self.S.shape != self.t.shape:
            raise ValueError("control samples must match the time grid")
        dt = np.diff(self.t)
        if self.t[0] != 0.0 or not np.all(dt > 0) or not np.allclose(dt, dt[0], rtol=1e-12, atol=0.0):
            raise ValueError("control grid must be uniform and start at 0")
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.S))):
            raise ValueError("control samples must be finite")
        if not (self.U_max > 0 and self.S_max > 0):
            raise ValueError("control bounds must be positive")
        eps = 1e-12
        if self.U.min() < -eps or self.U.max() > self.U_max + eps:
            raise ValueError("U outside [0, U_max]")
        if self.S.min() < -eps or self.S.max() > self.S_max + eps:
            raise ValueError("S outside [0, S_max]")

    def interp(self, t: float):
        """Linear interpolation of both controls at time t."""
        return (
            float(np.interp(t, self.t, self.U)),
            float(np.interp(t, self.t, self.S)),
        )

    def copy_with(self, U=None, S=None) -> "ControlTrajectory":
        return ControlTrajectory(
            t=self.t.copy(),
            U=self.U.copy() if U is None else np.asarray(U, dtype=float),
            S=self.S.copy() if S is None else np.asarray(S, dtype=float),
            U_max=self.U_max, S_max=self.S_max,
        )


def control_norm_sq(t: np.ndarray, v: np.ndarray) -> float:
    """Squared L2(0,T) norm of a sampled control, trapezoid rule."""
    return float(np.trapezoid(np.asarray(v) ** 2, np.asarray(t)))
