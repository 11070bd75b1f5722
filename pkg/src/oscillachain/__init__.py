"""Phase-difference dynamics of an asymmetrically coupled oscillator chain."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (AmbiguousBifurcation, DegeneratePhaseCondition,
                     InvalidCouplingFunction, NearSingularC, NoConvergence,
                     NoDoublingDirection, NoEquilibria, NonHyperbolic,
                     NotOneDimensional, NotSaddleFocusOrReal,
                     OscillaChainError, SingularMatrix, StepSizeUnderflow,
                     UnsupportedN, ZeroK)
from .model import (CouplingFunction, FullChainSystem, Parameters, SINE,
                    c_eigenvalues_closed_form, coupling_matrix,
                    coupling_matrix_determinant, full_chain_field, jacobian,
                    natural_frequencies, reduce_full_state, torus_distance,
                    travelling_wave_omega, vector_field)
from .numerics import IntegratorOptions, IntegrationResult, integrate_ode
from .equilibria import (Equilibrium, EquilibriumIndices, classify,
                         connection_generic, enumerate_equilibria,
                         hyperbolicity_margin, lyapunov_E, lyapunov_rate)
from .simulate import (ConnectionResult, Rotation, ROTATION, Trajectory,
                       WindingVector, detect_trapping,
                       export_trajectory_csv, shoot_unstable_manifold,
                       simulate, winding_over)
from .orbits import (PeriodicOrbit, SaddleSpectrum, classify_bifurcation,
                     double_period_seed, export_orbit_json, find_orbit,
                     floquet, guess_from_simulation, nontrivial_multipliers,
                     orbit_from_json, renode, saddle_spectrum_classify)
from .continuation import (Branch, BranchEvent, BranchPoint, RegionBoundary,
                           RegionEvent, RegionWindow, continue_branch,
                           export_branch_csv, export_region_csv,
                           period_doubling_cascade, trace_region)
from .basin import (BasinNStats, BasinSummary, BasinTrialResult,
                    export_basin_json, run_experiment, run_trial)

__all__ = [name for name in dir() if not name.startswith("_")]
