"""Assembly oracles: equilibria, finite differences, transpose duality."""

import numpy as np
import pytest

from tumorctl.assembly import (
    AdjointAssembler,
    ForwardAssembler,
    StateInterpolant,
    TangentAssembler,
)
from tumorctl.model import ModelParams, healthy_state, interp_gain
from tumorctl.splines import build_space


PARAMS = ModelParams()


def constant_controls(u, s):
    return lambda t: (u, s)


def stack_constant(space, phi, sigma, serum):
    y = np.empty(3 * space.n_b)
    y[:space.n_b] = phi
    y[space.n_b:2 * space.n_b] = sigma
    y[2 * space.n_b:] = serum
    return y


def random_state(space, rng, lo=0.1, hi=0.9):
    """Random coefficients with the phase boundary pinned to zero."""
    y = rng.uniform(lo, hi, size=3 * space.n_b)
    y[:space.n_b][space.boundary_idx] = 0.0
    return y


def feasible_direction(space, rng):
    d = rng.standard_normal(3 * space.n_b)
    d[:space.n_b][space.boundary_idx] = 0.0
    return d


@pytest.fixture(scope="module")
def small_space():
    return build_space(4, 1.0)


@pytest.fixture(scope="module")
def mid_space():
    return build_space(6, 2.0)


class TestStateInterpolant:
    def test_nodes_exact_and_midpoint_average(self):
        times = np.array([0.0, 1.0, 3.0])
        states = np.array([[0.0, 2.0], [1.0, 4.0], [5.0, 0.0]])
        f = StateInterpolant(times, states)
        assert np.array_equal(f(1.0), states[1])
        assert np.allclose(f(2.0), [3.0, 2.0], rtol=1e-15)

    def test_clamps_outside_range(self):
        f = StateInterpolant([0.0, 1.0], [[1.0], [3.0]])
        assert f(-5.0)[0] == 1.0
        assert f(7.0)[0] == 3.0

    def test_rejects_unsorted_times(self):
        with pytest.raises(ValueError):
            StateInterpolant([0.0, 0.0], [[1.0], [2.0]])
        with pytest.raises(ValueError):
            StateInterpolant([0.0, 1.0], [[1.0]])


class TestForwardResidual:
    def test_healthy_equilibrium_is_residual_free(self, small_space):
        phi0, sig0, p0 = healthy_state(PARAMS)
        y = stack_constant(small_space, phi0, sig0, p0)
        ydot = np.zeros_like(y)
        for u in (0.0, 0.12):
            asm = ForwardAssembler(small_space, PARAMS, constant_controls(u, 0.0))
            res = asm.assemble(ydot, y, 0.0, 1.0, 0.1, need_matrix=False)
            assert np.max(np.abs(res.residual)) < 1e-12

    def test_healthy_equilibrium_on_physical_domain(self):
        space = build_space(8, 3000.0)
        phi0, sig0, p0 = healthy_state(PARAMS)
        y = stack_constant(space, phi0, sig0, p0)
        asm = ForwardAssembler(space, PARAMS, constant_controls(0.0, 0.0))
        res = asm.assemble(np.zeros_like(y), y, 0.0, 1.0, 0.1, need_matrix=False)
        # residual entries scale with the basis integrals (~h^2)
        scale = np.max(space.w_int)
        assert np.max(np.abs(res.residual)) < 1e-10 * scale

    def test_constant_fields_reduce_to_weighted_integrals(self, small_space):
        prm = PARAMS
        sig_c, p_c = 0.37, 1.9
        y = stack_constant(small_space, 0.0, sig_c, p_c)
        asm = ForwardAssembler(small_space, prm, constant_controls(0.05, 0.3))
        res = asm.assemble(np.zeros_like(y), y, 0.0, 1.0, 0.1, need_matrix=False)
        rf, rs, rp = asm.split(res.residual)
        # phase closures vanish identically at phi = 0; the diffusion terms
        # amplify ~1e-18 gradient roundoff of constant fields by eta and D,
        # hence the 1e-9 tolerance
        assert np.array_equal(rf, np.zeros_like(rf))
        np.testing.assert_allclose(
            rs, (prm.gamma_h * sig_c - prm.S_h) * small_space.w_int, rtol=1e-9)
        np.testing.assert_allclose(
            rp, (prm.gamma_p * p_c - prm.alpha_h) * small_space.w_int, rtol=1e-9)

    def test_reflection_symmetry(self, small_space):
        rng = np.random.default_rng(7)
        nb1 = small_space.nb1
        y = np.empty(3 * small_space.n_b)
        ydot = np.empty_like(y)
        for vec in (y, ydot):
            for k in range(3):
                c = rng.uniform(0.1, 0.8, size=(nb1, nb1))
                vec[k * small_space.n_b:(k + 1) * small_space.n_b] = \
                    (0.5 * (c + c.T)).ravel()
        asm = ForwardAssembler(small_space, PARAMS, constant_controls(0.07, 0.2))
        res = asm.assemble(ydot, y, 0.0, 1.0, 0.1, need_matrix=False)
        for block in asm.split(res.residual):
            B = block.reshape(nb1, nb1)
            np.testing.assert_allclose(B, B.T, rtol=1e-12, atol=1e-13)

    def test_assembly_is_deterministic(self, small_space):
        rng = np.random.default_rng(3)
        y = random_state(small_space, rng)
        ydot = 0.1 * feasible_direction(small_space, rng)
        asm = ForwardAssembler(small_space, PARAMS, constant_controls(0.05, 0.1))
        a = asm.assemble(ydot, y, 0.3, 0.8, 0.05)
        b = asm.assemble(ydot, y, 0.3, 0.8, 0.05)
        assert np.array_equal(a.residual, b.residual)
        for i in range(3):
            for j in range(3):
                blk_a = a.operator.blocks[i][j]
                blk_b = b.operator.blocks[i][j]
                if blk_a is not None:
                    assert np.array_equal(blk_a.data, blk_b.data)


class TestNewtonOperator:
    """Central finite differences of the residual against the operator."""

    def _fd(self, asm, ydot, y, t, direction, wrt, eps=1e-6):
        if wrt == "value":
            rp = asm.assemble(ydot, y + eps * direction, t, 0.0, 1.0, False)
            rm = asm.assemble(ydot, y - eps * direction, t, 0.0, 1.0, False)
        else:
            rp = asm.assemble(ydot + eps * direction, y, t, 0.0, 1.0, False)
            rm = asm.assemble(ydot - eps * direction, y, t, 0.0, 1.0, False)
        return (rp.residual - rm.residual) / (2.0 * eps)

    def test_value_tangent_matches_fd(self, small_space):
        rng = np.random.default_rng(11)
        y = random_state(small_space, rng)
        ydot = 0.2 * feasible_direction(small_space, rng)
        asm = ForwardAssembler(small_space, PARAMS, constant_controls(0.06, 0.25))
        op = asm.assemble(ydot, y, 0.0, 0.0, 1.0).operator
        for _ in range(3):
            d = feasible_direction(small_space, rng)
            fd = self._fd(asm, ydot, y, 0.0, d, "value")
            ad = op.matvec(d)
            err = np.linalg.norm(ad - fd) / np.linalg.norm(fd)
            assert err < 1e-6

    def test_rate_tangent_matches_fd(self, small_space):
        rng = np.random.default_rng(13)
        y = random_state(small_space, rng)
        ydot = 0.2 * feasible_direction(small_space, rng)
        asm = ForwardAssembler(small_space, PARAMS, constant_controls(0.0, 0.0))
        op = asm.assemble(ydot, y, 0.0, 1.0, 0.0).operator
        for _ in range(3):
            d = feasible_direction(small_space, rng)
            # the residual is linear in the rates, so a unit step has no
            # truncation error and only roundoff survives
            fd = self._fd(asm, ydot, y, 0.0, d, "rate", eps=1.0)
            ad = op.matvec(d)
            err = np.linalg.norm(ad - fd) / np.linalg.norm(fd)
            assert err < 1e-9


class TestTangentSystem:
    def test_tangent_residual_is_forward_linearization(self, small_space):
        rng = np.random.default_rng(17)
        y = random_state(small_space, rng)
        controls = constant_controls(0.05, 0.2)
        fw = ForwardAssembler(small_space, PARAMS, controls)
        base = StateInterpolant([0.0, 1.0], np.vstack([y, y]))
        tan = TangentAssembler(small_space, PARAMS, base, controls,
                               constant_controls(0.0, 0.0))
        zeros = np.zeros_like(y)
        eps = 1e-6
        for _ in range(3):
            d = feasible_direction(small_space, rng)
            rp = fw.assemble(zeros, y + eps * d, 0.5, 0.0, 1.0, False).residual
            rm = fw.assemble(zeros, y - eps * d, 0.5, 0.0, 1.0, False).residual
            fd = (rp - rm) / (2.0 * eps)
            kd = tan.assemble(zeros, d, 0.5, 0.0, 1.0, False).residual
            err = np.linalg.norm(kd - fd) / np.linalg.norm(fd)
            assert err < 1e-6

    def test_dose_perturbation_sources(self, small_space):
        rng = np.random.default_rng(19)
        y = random_state(small_space, rng)
        du, ds = 1.3, -0.7
        base = StateInterpolant([0.0, 1.0], np.vstack([y, y]))
        tan = TangentAssembler(small_space, PARAMS, base,
                               constant_controls(0.02, 0.1),
                               constant_controls(du, ds))
        zeros = np.zeros_like(y)
        res = tan.assemble(zeros, zeros, 0.25, 0.0, 1.0, False)
        rf, rs, rp = tan.split(res.residual)

        phi_star = y[:small_space.n_b]
        dh = interp_gain(small_space.eval_quad_value(phi_star), PARAMS.M)[1]
        want_f = du * small_space.galerkin_vector(dh * small_space.W2)
        want_f[small_space.boundary_idx] = 0.0
        np.testing.assert_allclose(rf, want_f, rtol=1e-12, atol=1e-15)
        want_s = ds * (small_space.mass_matrix() @ phi_star)
        np.testing.assert_allclose(rs, want_s, rtol=1e-12)
        assert np.array_equal(rp, np.zeros_like(rp))


class TestAdjointSystem:
    def test_operator_is_exact_transpose_of_forward(self, mid_space):
        rng = np.random.default_rng(23)
        y = random_state(mid_space, rng)
        controls = constant_controls(0.08, 0.3)
        fw = ForwardAssembler(mid_space, PARAMS, controls)
        base = StateInterpolant([0.0, 2.0], np.vstack([y, y]))
        adj = AdjointAssembler(mid_space, PARAMS, base, controls)
        zeros = np.zeros_like(y)
        A = fw.assemble(zeros, y, 1.0, 0.0, 1.0).operator
        B = adj.assemble(zeros, zeros, 1.0, 0.0, 1.0).operator
        for _ in range(4):
            x = rng.standard_normal(y.size)
            v = rng.standard_normal(y.size)
            lhs = v @ A.matvec(x)
            rhs = x @ B.matvec(v)
            assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)

    def test_rate_term_enters_negated(self, small_space):
        rng = np.random.default_rng(29)
        y = random_state(small_space, rng)
        base = StateInterpolant([0.0, 1.0], np.vstack([y, y]))
        adj = AdjointAssembler(small_space, PARAMS, base,
                               constant_controls(0.0, 0.0))
        ydot = feasible_direction(small_space, rng)
        res = adj.assemble(ydot, np.zeros_like(y), 0.5, 1.0, 0.0, False)
        mass = small_space.mass_matrix()
        want = np.concatenate([-(mass @ block) for block in adj.split(ydot)])
        want[:small_space.n_b][small_space.boundary_idx] = 0.0
        np.testing.assert_allclose(res.residual, want, rtol=1e-12, atol=1e-15)

    def test_tracking_sources(self, small_space):
        rng = np.random.default_rng(31)
        y = random_state(small_space, rng)
        base = StateInterpolant([0.0, 1.0], np.vstack([y, y]))
        k1, phi_q, k4 = 2.0, 0.3, 5.0
        serum_total = float(small_space.w_int @ y[2 * small_space.n_b:])
        adj = AdjointAssembler(small_space, PARAMS, base,
                               constant_controls(0.0, 0.0),
                               k1=k1, phi_Q=phi_q, k4=k4,
                               p_omega=0.25 * serum_total)
        zeros = np.zeros_like(y)
        rw, rz, rq = adj.split(adj.assemble(zeros, zeros, 0.5, 0.0, 1.0,
                                            False).residual)
        mass = small_space.mass_matrix()
        want_w = -k1 * (mass @ y[:small_space.n_b]
                        - phi_q * small_space.w_int)
        want_w[small_space.boundary_idx] = 0.0
        np.testing.assert_allclose(rw, want_w, rtol=1e-12)
        assert np.array_equal(rz, np.zeros_like(rz))
        want_q = -k4 * (serum_total - 0.25 * serum_total) * small_space.w_int
        np.testing.assert_allclose(rq, want_q, rtol=1e-12)

    def test_serum_penalty_inactive_below_threshold(self, small_space):
        rng = np.random.default_rng(37)
        y = random_state(small_space, rng)
        base = StateInterpolant([0.0, 1.0], np.vstack([y, y]))
        serum_total = float(small_space.w_int @ y[2 * small_space.n_b:])
        adj = AdjointAssembler(small_space, PARAMS, base,
                               constant_controls(0.0, 0.0),
                               k4=3.0, p_omega=2.0 * serum_total)
        zeros = np.zeros_like(y)
        res = adj.assemble(zeros, zeros, 0.5, 0.0, 1.0, False)
        rq = adj.split(res.residual)[2]
        assert np.array_equal(rq, np.zeros_like(rq))
