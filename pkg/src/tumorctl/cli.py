"""Command-line driver: simulate, optimize, fit, verify, export.

Subcommands::

    forward           march the treated or untreated model, write QoI series
    optimize          projected-descent schedule optimization with KKT check
    fit-protocol      fit dose-schedule templates to an effect-curve CSV
    gradient-check    adjoint / finite-difference / tangent consistency table
    export-snapshots  field snapshots and tumor contours along one run

Exit codes: 0 success, 2 unusable configuration, 3 solver failure,
4 I/O or data-format error. All numeric outputs are deterministic:
rerunning a command with the same configuration (and seed, where one
applies) reproduces every CSV byte for byte, independent of --threads.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import io
from .config import ConfigError, RunConfig, config_lines, parse_config
from .forward import make_initial_state, pregrow, solve_forward, steps_for
from .model import (ControlTrajectory, DrugProtocol, ModelParams,
                    healthy_state, protocol_effect)
from .objective import ObjectiveSpec, evaluate, make_variant_spec
from .optimal import (gradient_series, solve_adjoint, steepest_descent,
                      tangent_solve, tracking_gateaux_from_tangent,
                      verify_kkt)
from .protocols import FitProblem, fit
from .splines import SplineSpace, build_space
from .timestepping import SolverError, alpha_scheme


@dataclass
class RunContext:
    """Resolved objects shared by every subcommand."""

    config: RunConfig
    space: SplineSpace
    params: ModelParams
    scheme: object
    settings: object
    y0: np.ndarray
    ydot0: Optional[np.ndarray]
    times: np.ndarray
    lines: list


def _initial_state(cfg: RunConfig, space: SplineSpace,
                   params: ModelParams) -> np.ndarray:
    if cfg.seed.mode == "healthy":
        phi0, sig0, p0 = healthy_state(params)
        nb = space.n_b
        y0 = np.empty(3 * nb)
        y0[:nb] = phi0
        y0[nb:2 * nb] = sig0
        y0[2 * nb:] = p0
        return y0
    return make_initial_state(space, cfg.seed.to_spec())


def _setup(cfg: RunConfig, *, grow: bool = True) -> RunContext:
    space = build_space(cfg.grid.elements, cfg.grid.side)
    params = cfg.model
    scheme = alpha_scheme(cfg.solver.rho_inf)
    settings = cfg.solver.to_settings()
    y0 = _initial_state(cfg, space, params)
    ydot0 = None
    if grow and cfg.time.pregrow > 0:
        y0, ydot0 = pregrow(space, params, y0, dt=cfg.time.dt,
                            duration=cfg.time.pregrow, scheme=scheme,
                            settings=settings)
    n = steps_for(cfg.time.duration, cfg.time.dt)
    times = cfg.time.dt * np.arange(n + 1)
    return RunContext(cfg, space, params, scheme, settings, y0, ydot0,
                      times, config_lines(cfg))


def _reference_schedules(cfg: RunConfig, params: ModelParams,
                         times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Single-dose reference effect curves, clamped into the boxes."""
    g = cfg.guess
    cyto = DrugProtocol(kind="cytotoxic", doses=(g.cyto_dose,), times=(0.0,),
                        tau=g.cyto_tau, beta=g.cyto_beta,
                        m_ref_factor=True, m_ref=params.m_ref)
    anti = DrugProtocol(kind="antiangiogenic", doses=(g.anti_dose,),
                        times=(0.0,), tau=g.anti_tau, beta=g.anti_beta)
    U = np.clip(protocol_effect(cyto, times), 0.0, cfg.controls.u_max)
    S = np.clip(protocol_effect(anti, times), 0.0, cfg.controls.s_max)
    return U, S


def _guess_controls(cfg: RunConfig, params: ModelParams,
                    times: np.ndarray) -> ControlTrajectory:
    if cfg.guess.mode == "zero":
        U = np.zeros_like(times)
        S = np.zeros_like(times)
    else:
        U, S = _reference_schedules(cfg, params, times)
    return ControlTrajectory(t=times, U=U, S=S, U_max=cfg.controls.u_max,
                             S_max=cfg.controls.s_max)


def _forward_controls(cfg: RunConfig, params: ModelParams,
                      times: np.ndarray) -> ControlTrajectory:
    mode = cfg.forward.control
    if mode == "untreated":
        U = np.zeros_like(times)
        S = np.zeros_like(times)
    elif mode == "max":
        U = np.full_like(times, cfg.controls.u_max)
        S = np.zeros_like(times)
    else:
        U, S = _reference_schedules(cfg, params, times)
    return ControlTrajectory(t=times, U=U, S=S, U_max=cfg.controls.u_max,
                             S_max=cfg.controls.s_max)


def _export_node(out: Path, name: str, ctx: RunContext, state: np.ndarray,
                 time: float) -> None:
    n_points = ctx.config.grid.lattice
    io.write_vtk_snapshot(out / f"{name}.vtk", ctx.space, state, time,
                          n_points)
    io.write_binary_snapshot(out / name, ctx.space, state, time, n_points)


def _snapshot_nodes(cfg: RunConfig, n: int) -> list:
    every = cfg.output.snapshot_every
    if every <= 0:
        return [0, n] if n > 0 else [0]
    ks = sorted(set(range(0, n + 1, every)) | {0, n})
    return ks


def _objective_spec(cfg: RunConfig, params: ModelParams,
                    space: SplineSpace) -> ObjectiveSpec:
    return make_variant_spec(cfg.objective.variant, cfg.objective.weight,
                             params, space, k6=cfg.objective.k6,
                             k7=cfg.objective.k7,
                             measure=cfg.objective.measure)


# -- subcommands --------------------------------------------------------------


def cmd_forward(cfg: RunConfig, args, out: Path) -> int:
    """One treatment-window march; QoI series, snapshots, final contour."""
    ctx = _setup(cfg)
    ctr = _forward_controls(cfg, ctx.params, ctx.times)
    store = cfg.output.snapshot_every > 0
    res = solve_forward(ctx.space, ctx.params, ctr.interp, ctx.y0, ctx.ydot0,
                        dt=cfg.time.dt, duration=cfg.time.duration,
                        scheme=ctx.scheme, settings=ctx.settings, store=store)
    io.write_qoi_csv(out / "qoi.csv", res.times, res.v_phi, res.serum_total,
                     ctx.lines, scale=cfg.output.v_phi_scale)
    io.write_controls_csv(out / "controls.csv", ctx.times, ctr.U, ctr.S,
                          ctx.lines)
    if store:
        for k in _snapshot_nodes(cfg, ctx.times.size - 1):
            _export_node(out, f"snapshot_{k:05d}", ctx, res.states[k],
                         float(res.times[k]))
    _export_node(out, "final", ctx, res.final_state, cfg.time.duration)
    io.write_contour_csv(out / "contour.csv", ctx.space,
                         res.final_state[:ctx.space.n_b], cfg.grid.lattice,
                         ctx.lines)
    print(f"forward: {ctx.times.size - 1} steps, control = "
          f"{cfg.forward.control}, v_phi(T) = {res.v_phi[-1]:.8g}, "
          f"P_s(T) = {res.serum_total[-1]:.8g}")
    print(f"wrote qoi.csv, controls.csv, contour.csv, final.vtk under {out}")
    return 0


def cmd_export_snapshots(cfg: RunConfig, args, out: Path) -> int:
    """Field snapshots and contours at the configured cadence."""
    ctx = _setup(cfg)
    ctr = _forward_controls(cfg, ctx.params, ctx.times)
    res = solve_forward(ctx.space, ctx.params, ctr.interp, ctx.y0, ctx.ydot0,
                        dt=cfg.time.dt, duration=cfg.time.duration,
                        scheme=ctx.scheme, settings=ctx.settings, store=True)
    ks = _snapshot_nodes(cfg, ctx.times.size - 1)
    for k in ks:
        state = res.states[k]
        _export_node(out, f"snapshot_{k:05d}", ctx, state,
                     float(res.times[k]))
        io.write_contour_csv(out / f"contour_{k:05d}.csv", ctx.space,
                             state[:ctx.space.n_b], cfg.grid.lattice,
                             ctx.lines)
    print(f"export-snapshots: wrote {len(ks)} snapshot(s) at nodes "
          f"{ks} under {out}")
    return 0


def cmd_optimize(cfg: RunConfig, args, out: Path) -> int:
    """Descent over both schedules; history, optimum, KKT report."""
    ctx = _setup(cfg)
    spec = _objective_spec(cfg, ctx.params, ctx.space)
    ctr0 = _guess_controls(cfg, ctx.params, ctx.times)

    def progress(rec):
        print(f"  iter {rec.iteration}: J = {rec.J:.9g} "
              f"mu = {rec.mu_star:.4g} {rec.criterion}".rstrip())

    result = steepest_descent(ctx.space, ctx.params, spec, ctx.y0, ctr0,
                              ydot0=ctx.ydot0, scheme=ctx.scheme,
                              settings=ctx.settings, descent=cfg.descent,
                              progress=progress)
    kkt = verify_kkt(ctx.space, ctx.params, result.forward, result.adjoint,
                     result.controls, spec)

    io.write_iterations_csv(out / "iterations.csv", result.records, ctx.lines)
    io.write_controls_csv(out / "controls.csv", result.controls.t,
                          result.controls.U, result.controls.S, ctx.lines)
    io.write_controls_csv(out / "controls_initial.csv", ctr0.t, ctr0.U,
                          ctr0.S, ctx.lines)
    io.write_qoi_csv(out / "qoi.csv", result.forward.times,
                     result.forward.v_phi, result.forward.serum_total,
                     ctx.lines, scale=cfg.output.v_phi_scale)
    io.write_kkt_csv(out / "kkt.csv", kkt, ctx.lines)
    nb = ctx.space.n_b
    io.write_contour_csv(out / "contour_initial.csv", ctx.space,
                         ctx.y0[:nb], cfg.grid.lattice, ctx.lines)
    io.write_contour_csv(out / "contour_final.csv", ctx.space,
                         result.forward.final_state[:nb], cfg.grid.lattice,
                         ctx.lines)
    _export_node(out, "final", ctx, result.forward.final_state,
                 cfg.time.duration)

    rec = result.records[-1]
    gap_u, gap_s = kkt.max_interior_gap()
    print(f"optimize: {len(result.records) - 1} accepted step(s), "
          f"J = {rec.J:.9g}, stop = {result.criterion}")
    print(f"kkt: max residual U = {kkt.max_residual_u:.3e}, "
          f"S = {kkt.max_residual_s:.3e}, interior gaps = "
          f"({gap_u:.3e}, {gap_s:.3e})")
    print(f"wrote iterations.csv, controls.csv, kkt.csv, qoi.csv under {out}")
    return 0


_TEMPLATES = (
    ("one-dose", 1, False),
    ("three-dose", 3, False),
    ("one-dose-free-tau", 1, True),
    ("three-dose-free-tau", 3, True),
)


def cmd_fit_protocol(cfg: RunConfig, args, out: Path) -> int:
    """Fit all four schedule templates to a target effect curve.

    The target is the optimizer's schedule CSV; the cytotoxic column U
    is the curve being matched.
    """
    cols = io.read_controls_csv(args.target)
    t, target = cols["t"], cols["U"]
    fits = {}
    curves = {}
    for tag, n_doses, free_tau in _TEMPLATES:
        try:
            problem = FitProblem(
                times=t, target=target, n_doses=n_doses, free_tau=free_tau,
                beta=cfg.fit.beta, tau_start=cfg.fit.tau,
                m_ref_factor=True, m_ref=cfg.model.m_ref,
                dose_bounds=(0.0, cfg.fit.dose_max),
                time_bounds=(0.0, cfg.fit.time_max),
                tau_bounds=(cfg.fit.tau_min, cfg.fit.tau_max),
                tol=cfg.fit.tol, max_iters=cfg.fit.max_iters)
        except ValueError as exc:
            raise io.FormatError(f"target {args.target}: {exc}") from None
        res = fit(problem)
        fits[tag] = res
        curves[tag] = protocol_effect(res.protocol, t)
        r2 = "n/a" if res.r2 is None else f"{res.r2:.6f}"
        doses = ", ".join(f"{d:.4f}" for d in res.protocol.doses)
        times = ", ".join(f"{ti:.4f}" for ti in res.protocol.times)
        print(f"{tag}: rmse = {res.rmse:.6e}, r2 = {r2}, "
              f"doses = [{doses}] at t = [{times}], "
              f"tau = {res.protocol.tau:.4f} ({res.reason})")
    io.write_fit_csv(out / "fit_report.csv", fits, config_lines(cfg))
    io.write_fit_curves_csv(out / "fit_curves.csv", t, target, curves,
                            config_lines(cfg))
    print(f"wrote fit_report.csv, fit_curves.csv under {out}")
    return 0


def _penalty_gateaux(spec: ObjectiveSpec, ctr: ControlTrajectory,
                     dU: np.ndarray, dS: np.ndarray) -> float:
    return (spec.k6 * float(np.trapezoid(ctr.U * dU, ctr.t))
            + spec.k7 * float(np.trapezoid(ctr.S * dS, ctr.t)))


def cmd_gradient_check(cfg: RunConfig, args, out: Path) -> int:
    """Derivative consistency sweep over two time-step levels.

    On the configured mesh, each level compares the adjoint directional
    derivative against centered finite differences of the objective
    (two step multipliers) and against the tangent-linearization value.
    The randomized direction is drawn once on the coarse grid and
    interpolated, so both levels probe the same continuous direction
    and the consistency errors contract under the refinement. A leading
    zero-direction row per level pins the exact-zero base case.
    """
    rng = np.random.default_rng(args.seed)
    ctx0 = _setup(cfg)
    spec = _objective_spec(cfg, ctx0.params, ctx0.space)
    n_el = cfg.grid.elements

    # directions scaled to stay inside the admissible boxes
    tc = ctx0.times
    dU_c = rng.uniform(-1.0, 1.0, tc.size) * (cfg.controls.u_max / 4.0)
    dS_c = rng.uniform(-1.0, 1.0, tc.size) * (cfg.controls.s_max / 4.0)

    rows = []
    for dt in (cfg.time.dt, cfg.time.dt / 2.0):
        lcfg = replace(cfg, time=replace(cfg.time, dt=dt))
        ctx = _setup(lcfg)
        times = ctx.times
        U = np.full_like(times, cfg.controls.u_max / 2.0)
        S = np.full_like(times, cfg.controls.s_max / 2.0)
        ctr = ControlTrajectory(t=times, U=U, S=S,
                                U_max=cfg.controls.u_max,
                                S_max=cfg.controls.s_max)
        base = solve_forward(ctx.space, ctx.params, ctr.interp, ctx.y0,
                             ctx.ydot0, dt=dt, duration=cfg.time.duration,
                             scheme=ctx.scheme, settings=ctx.settings)
        adj = solve_adjoint(ctx.space, ctx.params, base, ctr, spec,
                            scheme=ctx.scheme, settings=ctx.settings)
        d_U, d_S = gradient_series(ctx.space, ctx.params, base, adj, ctr,
                                   spec)

        dU = np.interp(times, tc, dU_c)
        dS = np.interp(times, tc, dS_c)

        rows.append((n_el, dt, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))

        g_adj = float(np.trapezoid(d_U * dU + d_S * dS, times))
        tan = tangent_solve(ctx.space, ctx.params, base, ctr, dU, dS,
                            scheme=ctx.scheme, settings=ctx.settings)
        g_tan = tracking_gateaux_from_tangent(spec, ctx.space, base, tan) \
            + _penalty_gateaux(spec, ctr, dU, dS)
        denom = max(abs(g_adj), 1e-300)
        rel_dual = abs(g_tan - g_adj) / denom

        for eps in (0.5, 0.25):
            J_pair = []
            for sign in (1.0, -1.0):
                c = ctr.copy_with(U=U + sign * eps * dU,
                                  S=S + sign * eps * dS)
                res = solve_forward(ctx.space, ctx.params, c.interp, ctx.y0,
                                    ctx.ydot0, dt=dt,
                                    duration=cfg.time.duration,
                                    scheme=ctx.scheme, settings=ctx.settings)
                J_pair.append(evaluate(spec, ctx.space, res, c)[0])
            g_fd = (J_pair[0] - J_pair[1]) / (2.0 * eps)
            rows.append((n_el, dt, eps, g_fd, g_adj,
                         abs(g_fd - g_adj) / denom, g_tan, rel_dual))
        print(f"level {n_el}x{n_el} dt = {dt:g}: adjoint = {g_adj:.9g}, "
              f"tangent = {g_tan:.9g}, duality rel = {rel_dual:.3e}")

    io.write_gradient_csv(out / "gradient_check.csv", rows,
                          config_lines(cfg), extra=(f"seed = {args.seed}",))
    print(f"wrote gradient_check.csv under {out}")
    return 0


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tumorctl",
        description="Tumor growth simulation and dose-schedule optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", required=True, metavar="PATH",
                       help="run configuration file (INI)")
        p.add_argument("--out", metavar="DIR",
                       help="override the configured output directory")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker cap; evaluations run serially, results "
                            "do not depend on this")
        return p

    add("forward", "march the model once and write the QoI series")
    add("optimize", "optimize both dose schedules by projected descent")
    p_fit = add("fit-protocol", "fit schedule templates to an effect curve")
    p_fit.add_argument("--target", required=True, metavar="CSV",
                       help="schedule CSV whose U column is the target curve")
    p_grad = add("gradient-check", "adjoint/FD/tangent consistency table")
    p_grad.add_argument("--seed", type=int, default=0, metavar="N",
                        help="seed for the randomized test directions")
    add("export-snapshots", "write field snapshots and contours along a run")
    return parser


_COMMANDS = {
    "forward": cmd_forward,
    "optimize": cmd_optimize,
    "fit-protocol": cmd_fit_protocol,
    "gradient-check": cmd_gradient_check,
    "export-snapshots": cmd_export_snapshots,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg = parse_config(args.config)
        if args.out:
            cfg = replace(cfg, output=replace(cfg.output,
                                              directory=args.out))
        out = Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"tumorctl: config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"tumorctl: solver failure: {exc}", file=sys.stderr)
        return 3
    except io.FormatError as exc:
        print(f"tumorctl: data error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"tumorctl: i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
