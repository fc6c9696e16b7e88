"""Optimal chemotherapy scheduling for a phase-field prostate tumor model."""

from tumorctl.forward import (
    make_initial_state,
    pregrow,
    solve_forward,
)
from tumorctl.model import (
    ControlTrajectory,
    DrugProtocol,
    ModelParams,
    antiangiogenic_reference,
    docetaxel_reference,
    double_well,
    healthy_state,
    interp_gain,
    net_growth,
    protocol_effect,
)
from tumorctl.objective import ObjectiveSpec, make_variant_spec
from tumorctl.optimal import (
    DescentSettings,
    solve_adjoint,
    steepest_descent,
    verify_kkt,
)
from tumorctl.protocols import FitProblem, FitResult, fit
from tumorctl.splines import SplineSpace, build_space
from tumorctl.timestepping import SolverSettings, alpha_scheme

__version__ = "0.1.0"
