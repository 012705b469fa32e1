"""Finite-volume solver for the controlled pressureless Euler alignment system."""

from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .control import ControlLaw, UbarPreset, instantaneous_control, one_step_control, ubar_field
from .experiment import list_presets, run_experiment, self_convergence
from .grid import Grid, State, init_preset, kinetic_energy, make_grid, total_mass, total_momentum
from .kernel import KernelSpec, alignment_force, convolve_psi_rho, psi
from .scheme import SchemeConfig, nonstiff_rhs, reconstruct
from .thresholds import characteristic_ode_oracle, classify_1d, classify_2d, support_diagnostics
from .timestep import BlowupPolicy, imex_step, run, select_dt, stiff_relaxation_solve

__version__ = "0.1.0"
