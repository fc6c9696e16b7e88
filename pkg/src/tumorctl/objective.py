"""Treatment objective: weighted tracking and dose-penalty functional.

The functional scores a forward run by how small the tumor stays, how
little serum marker accumulates above a tolerated level, and how much
drug the schedule spends. Each weight can be switched off; named
variants zero out fixed subsets so studies can isolate tumor-volume,
terminal-burden, or marker-driven goals.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Tuple, Union

import numpy as np

from .forward import ForwardResult
from .model import ControlTrajectory, ModelParams
from .splines import SplineSpace

Target = Union[float, np.ndarray]

VARIANTS = ("J", "J1", "J2", "J3")

# weights each named variant forces to zero
_VARIANT_ZEROS = {
    "J": (),
    "J1": ("k3", "k5"),
    "J2": ("k1", "k3", "k5"),
    "J3": ("k1", "k2", "k5"),
}

TERM_NAMES = ("k1", "k2", "k3", "k4", "k5", "k6", "k7")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Weights and targets of the treatment functional.

    k1: running phase tracking, k2: terminal phase tracking, k3:
    terminal tumor mass, k4: serum excess above ``p_Omega``, k5:
    terminal serum mass, k6/k7: quadratic dose penalties. Targets may
    be constants or fields (``phi_Q``, ``phi_Omega`` as coefficient
    arrays; ``p_Omega`` as a callable of time).
    """

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    k5: float = 0.0
    k6: float = 0.0
    k7: float = 0.0
    phi_Q: Target = 0.0
    phi_Omega: Target = 0.0
    p_Omega: Union[float, Callable[[float], float]] = 0.0
    variant: str = "J"
    space_time_penalty: bool = False

    def __post_init__(self):
        weights = self.weights()
        for name, value in weights.items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"weight {name} must be finite and >= 0")
        if all(v == 0.0 for v in weights.values()):
            raise ValueError("at least one objective weight must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for name in _VARIANT_ZEROS[self.variant]:
            if weights[name] != 0.0:
                raise ValueError(
                    f"variant {self.variant} requires {name} = 0")
        if self.space_time_penalty:
            raise ValueError(
                "only time-only control penalties are supported")

    def weights(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in TERM_NAMES}


def default_targets(params: ModelParams, space: SplineSpace):
    """Healthy-tissue targets: zero phase and equilibrium serum mass."""
    volume = space.integrate_field(np.ones(space.n_b))
    p_omega = params.alpha_h * volume / params.gamma_p
    return 0.0, 0.0, p_omega


def make_variant_spec(variant: str, weight: float, params: ModelParams,
                      space: SplineSpace, k6: float = 1.0, k7: float = 1.0,
                      measure: str = "raw") -> ObjectiveSpec:
    """Named variant with one shared tracking weight and default targets.

    The shared weight fills every tracking term the variant keeps: J1
    uses it for k1 = k2 = k4, J2 for k2 = k4, J3 for k3 = k4. The dose
    penalties default to 1 so neither therapy is favored.

    With ``measure="average"`` the spatial tracking terms are taken per
    unit of domain volume, which keeps them comparable with the
    time-only dose penalties on domains of any physical extent: the
    weights of the terms linear in a spatial integral (k1, k2, k3, k5)
    are divided by the domain volume and k4, whose integrand is a
    squared spatial integral, by the volume squared. Targets are not
    rescaled. ``measure="raw"`` keeps the physical measure as is.
    """
    if measure not in ("raw", "average"):
        raise ValueError(f"unknown measure {measure!r}")
    phi_q, phi_om, p_om = default_targets(params, space)
    lin = weight
    quad = weight
    if measure == "average":
        volume = space.integrate_field(np.ones(space.n_b))
        lin = weight / volume
        quad = weight / volume ** 2
    kw = dict(phi_Q=phi_q, phi_Omega=phi_om, p_Omega=p_om,
              k6=k6, k7=k7, variant=variant)
    if variant == "J1":
        return ObjectiveSpec(k1=lin, k2=lin, k4=quad, **kw)
    if variant == "J2":
        return ObjectiveSpec(k2=lin, k4=quad, **kw)
    if variant == "J3":
        return ObjectiveSpec(k3=lin, k4=quad, **kw)
    if variant == "J":
        return ObjectiveSpec(k1=lin, k2=lin, k3=lin, k4=quad,
                             k5=lin, **kw)
    raise ValueError(f"unknown variant {variant!r}")


def target_coeffs(space: SplineSpace, target: Target) -> np.ndarray:
    if np.ndim(target) == 0:
        return float(target) * np.ones(space.n_b)
    arr = np.asarray(target, dtype=float)
    if arr.shape != (space.n_b,):
        raise ValueError("field target has the wrong number of coefficients")
    return arr


def serum_target_series(spec: ObjectiveSpec, times: np.ndarray) -> np.ndarray:
    if callable(spec.p_Omega):
        return np.array([float(spec.p_Omega(t)) for t in times])
    return float(spec.p_Omega) * np.ones(times.shape)


def evaluate(spec: ObjectiveSpec, space: SplineSpace, result: ForwardResult,
             controls: ControlTrajectory) -> Tuple[float, Dict[str, float]]:
    """Objective value and its per-weight breakdown for one run.

    Time integrals use the trapezoidal rule on the march grid; the
    serum excess is clipped at zero pointwise in time before squaring.
    The breakdown entries sum to the returned value exactly.
    """
    times = result.times
    if controls.t.shape != times.shape or not np.allclose(
            controls.t, times, rtol=1e-12, atol=1e-12):
        raise ValueError("controls and trajectory use different time grids")

    nb = space.n_b
    phi_T = result.final_state[:nb]
    serum_T = result.final_state[2 * nb:]
    terms = dict.fromkeys(TERM_NAMES, 0.0)

    if spec.k1 > 0.0:
        if result.states is None:
            raise ValueError(
                "running phase tracking needs a stored trajectory")
        ref = target_coeffs(space, spec.phi_Q)
        mismatch = np.array([
            space.integrate_product(row[:nb] - ref, row[:nb] - ref)
            for row in result.states])
        terms["k1"] = 0.5 * spec.k1 * float(np.trapezoid(mismatch, times))
    if spec.k2 > 0.0:
        diff = phi_T - target_coeffs(space, spec.phi_Omega)
        terms["k2"] = 0.5 * spec.k2 * space.integrate_product(diff, diff)
    if spec.k3 > 0.0:
        terms["k3"] = spec.k3 * space.integrate_field(phi_T)
    if spec.k4 > 0.0:
        excess = np.maximum(
            result.serum_total - serum_target_series(spec, times), 0.0)
        terms["k4"] = 0.5 * spec.k4 * float(np.trapezoid(excess ** 2, times))
    if spec.k5 > 0.0:
        terms["k5"] = spec.k5 * space.integrate_field(serum_T)
    if spec.k6 > 0.0:
        terms["k6"] = 0.5 * spec.k6 * float(
            np.trapezoid(controls.U ** 2, times))
    if spec.k7 > 0.0:
        terms["k7"] = 0.5 * spec.k7 * float(
            np.trapezoid(controls.S ** 2, times))

    total = sum(terms.values())
    return total, terms
