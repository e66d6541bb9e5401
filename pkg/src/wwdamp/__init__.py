"""Damped gravity-capillary water-wave tank: simulator and numerical verifier.

The package evolves the free-surface potential-flow system in surface
variables with a wall-zone feedback pressure, and checks the associated
energy identities, inequalities and explicit constants at desk scale.
"""

from .dtn import EllipticSolver, dtn_flat, dtn_taylor, flat_symbol
from .dynamics import (FlowModel, RhsEval, Simulator, SurfaceState,
                       Trajectory, curvature, make_state, nonlinear_term,
                       pressure_feedback, standing_wave_state, suggested_dt)
from .energy import (AssumptionReport, EnergyBreakdown, MultiplierFields,
                     assumption_monitor, energy, energy_from,
                     multiplier_fields)
from .errors import (BlowUpError, CheckpointError, ConfigError,
                     MapDegenerateError, SolverConvergenceError, WwdampError)
from .grid import Field, Grid, differentiate
from .params import (ControlParams, CutoffProfile, PhysicalParams,
                     build_cutoff, check_multiplier_domination,
                     check_tension_compatibility, profile_to_csv)
from .runio import RunConfig, checkpoint_roundtrip, load_config, parse_config
from .verify import (ConstantsLedger, DecayReport, InequalityReport,
                     RemainderLedger, check_decay, compute_constants,
                     run_suite, verify_equipartition, verify_flux_identity,
                     verify_main_inequality, verify_pohozaev,
                     verify_pressure_work_bounds, verify_psi_x_control,
                     verify_remainder_bound)

__version__ = "0.1.0"
