"""Closure, parameter and protocol checks against independently frozen values."""

import numpy as np
import pytest

from tumorctl.model import (
    ControlTrajectory,
    DrugProtocol,
    ModelParams,
    antiangiogenic_reference,
    control_norm_sq,
    docetaxel_reference,
    double_well,
    healthy_state,
    interp_gain,
    net_growth,
    net_growth_prime,
    protocol_effect,
)

# Frozen with an independent symbolic oracle (see tests' docstrings policy:
# values are pinned, not recomputed here).
PHI_PTS = np.array([-0.2, 0.0, 0.3, 0.5, 0.7, 1.0, 1.2])
F_VALS = np.array([0.144, 0.0, 0.11025, 0.15625, 0.11025, 0.0, 0.144])
FP_VALS = np.array([-1.68, 0.0, 0.42, 0.0, -0.42, 0.0, 1.68])
FPP_VALS = np.array([12.2, 5.0, -1.3, -2.5, -1.3, 5.0, 12.2])
H_VALS = np.array([0.34, 0.0, 0.54, 1.25, 1.96, 2.5, 2.16])
HP_VALS = np.array([-3.6, 0.0, 3.15, 3.75, 3.15, 0.0, -3.6])
HPP_VALS = np.array([21.0, 15.0, 6.0, 0.0, -6.0, -15.0, -21.0])

SIG_PTS = np.array([0.0, 0.16, 0.2, 0.5, 1.0])
M_VALS = np.array([
    -0.030843002823738685, -0.0019875456727033847, 0.013122619047619048,
    0.062723068604832743, 0.070561779343473446,
])
MP_VALS = np.array([
    0.079421348125581332, 0.34233339709302298, 0.39710674062790666,
    0.039710674062790666, 0.0061093344711985640,
])


class TestClosures:
    def test_double_well_frozen_values(self):
        F, dF, d2F = double_well(PHI_PTS)
        np.testing.assert_allclose(F, F_VALS, rtol=1e-14)
        np.testing.assert_allclose(dF, FP_VALS, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(d2F, FPP_VALS, rtol=1e-14)

    def test_interp_gain_frozen_values(self):
        h, dh, d2h = interp_gain(PHI_PTS)
        np.testing.assert_allclose(h, H_VALS, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(dh, HP_VALS, rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(d2h, HPP_VALS, rtol=1e-14)

    def test_net_growth_frozen_values(self):
        p = ModelParams()
        np.testing.assert_allclose(net_growth(SIG_PTS, p), M_VALS, rtol=1e-14)
        np.testing.assert_allclose(net_growth_prime(SIG_PTS, p), MP_VALS, rtol=1e-14)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-0.3, 1.3, size=40)
        eps = 1e-6
        for fn in (double_well, interp_gain):
            f0, d1, d2 = fn(x)
            fp = fn(x + eps)[0]
            fm = fn(x - eps)[0]
            np.testing.assert_allclose(d1, (fp - fm) / (2 * eps), rtol=1e-7, atol=1e-7)
            np.testing.assert_allclose(d2, (fp - 2 * f0 + fm) / eps**2, rtol=1e-3, atol=1e-3)
        p = ModelParams()
        s = rng.uniform(0.0, 1.5, size=40)
        dm = (net_growth(s + eps, p) - net_growth(s - eps, p)) / (2 * eps)
        np.testing.assert_allclose(net_growth_prime(s, p), dm, rtol=1e-7)

    def test_net_growth_monotone_and_bounded(self):
        p = ModelParams()
        s = np.linspace(-5.0, 20.0, 4001)
        m = net_growth(s, p)
        assert np.all(np.diff(m) > 0)
        lo, hi = p.m_ref * p.A, p.m_ref * p.rho
        assert np.all(m > lo) and np.all(m < hi)
        # midpoint value at the reference nutrient level
        assert net_growth(p.sigma_l, p) == pytest.approx(0.013122619047619048, rel=1e-13)


class TestParams:
    def test_derived_constants(self):
        p = ModelParams()
        assert p.gamma_ch == pytest.approx(15.0)
        assert p.alpha_ch == pytest.approx(14 * 1.712e-2)
        assert p.S_ch == pytest.approx(0.75)
        assert p.rho == pytest.approx(1.0)
        assert p.A == pytest.approx(-0.65238095238095238, rel=1e-14)

    def test_healthy_state(self):
        phi0, sig0, p0 = healthy_state(ModelParams())
        assert phi0 == 0.0
        assert sig0 == pytest.approx(1.0)
        assert p0 == pytest.approx(1.712e-2 / 0.274, rel=1e-14)
        assert p0 == pytest.approx(0.0625, rel=3e-3)  # the nominal baseline level

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ModelParams(lam=0.0)
        with pytest.raises(ValueError):
            ModelParams(gamma_p=-1.0)
        with pytest.raises(ValueError):
            ModelParams(sigma_r=0.0)


class TestProtocols:
    def test_reference_cytotoxic_initial_value(self):
        # m_ref * beta * dose at t = 0, decaying with tau = 5
        p = ModelParams()
        proto = docetaxel_reference(p)
        v0 = protocol_effect(proto, 0.0)
        assert v0 == pytest.approx(7.55e-2 * 1.59e-2 * 75.0, rel=1e-14)
        v5 = protocol_effect(proto, 5.0)
        assert v5 == pytest.approx(v0 * np.exp(-1.0), rel=1e-13)

    def test_reference_antiangiogenic_initial_value(self):
        proto = antiangiogenic_reference()
        assert protocol_effect(proto, 0.0) == pytest.approx(0.04 * 15.0, rel=1e-14)
        assert protocol_effect(proto, 30.0) == pytest.approx(0.6 * np.exp(-1.0), rel=1e-13)

    def test_dose_at_t_contributes_at_t(self):
        proto = DrugProtocol(kind="cytotoxic", doses=(10.0,), times=(3.0,),
                             tau=2.0, beta=1.0)
        t = np.array([2.999999, 3.0, 3.5])
        v = protocol_effect(proto, t)
        assert v[0] == 0.0
        assert v[1] == pytest.approx(10.0)
        assert v[2] == pytest.approx(10.0 * np.exp(-0.25))

    def test_superposition(self):
        a = DrugProtocol(kind="x", doses=(4.0,), times=(1.0,), tau=3.0, beta=0.5)
        b = DrugProtocol(kind="x", doses=(7.0,), times=(6.0,), tau=3.0, beta=0.5)
        ab = DrugProtocol(kind="x", doses=(4.0, 7.0), times=(1.0, 6.0), tau=3.0, beta=0.5)
        t = np.linspace(0.0, 21.0, 211)
        np.testing.assert_allclose(
            protocol_effect(ab, t),
            protocol_effect(a, t) + protocol_effect(b, t),
            rtol=1e-14, atol=1e-16,
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            DrugProtocol(kind="x", doses=(1.0, 2.0), times=(0.0,), tau=1.0, beta=1.0)
        with pytest.raises(ValueError):
            DrugProtocol(kind="x", doses=(-1.0,), times=(0.0,), tau=1.0, beta=1.0)
        with pytest.raises(ValueError):
            DrugProtocol(kind="x", doses=(1.0, 2.0), times=(5.0, 1.0), tau=1.0, beta=1.0)
        with pytest.raises(ValueError):
            DrugProtocol(kind="x", doses=(1.0,), times=(0.0,), tau=0.0, beta=1.0)


class TestControlTrajectory:
    def make(self, n=22, T=21.0):
        t = np.linspace(0.0, T, n)
        return ControlTrajectory(t=t, U=np.full(n, 0.01), S=np.zeros(n),
                                 U_max=0.12, S_max=0.8)

    def test_interp_linear(self):
        c = self.make(n=3, T=2.0)
        c.U[:] = [0.0, 0.1, 0.05]
        u, s = c.interp(0.5)
        assert u == pytest.approx(0.05)
        assert s == 0.0

    def test_rejects_out_of_box(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            ControlTrajectory(t=t, U=np.full(5, 0.2), S=np.zeros(5), U_max=0.12, S_max=0.8)
        with pytest.raises(ValueError):
            ControlTrajectory(t=t, U=np.zeros(5), S=np.full(5, -0.1), U_max=0.12, S_max=0.8)

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            ControlTrajectory(t=np.array([0.0, 0.5, 0.7]), U=np.zeros(3), S=np.zeros(3),
                              U_max=1.0, S_max=1.0)
        with pytest.raises(ValueError):
            ControlTrajectory(t=np.array([1.0, 2.0]), U=np.zeros(2), S=np.zeros(2),
                              U_max=1.0, S_max=1.0)

    def test_norm_sq_trapezoid(self):
        t = np.linspace(0.0, 2.0, 201)
        v = np.ones_like(t)
        assert control_norm_sq(t, v) == pytest.approx(2.0, rel=1e-13)
        # linear ramp: integral of t^2 over [0,2] is 8/3, trapezoid is close
        assert control_norm_sq(t, t) == pytest.approx(8.0 / 3.0, rel=1e-4)
