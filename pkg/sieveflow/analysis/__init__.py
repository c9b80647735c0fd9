from .flux import (
    FluxProfile, axial_range, end_flux, flux, flux_profile, section_quadrature, sigma_mass, trace_norm_sigma,
)
from .norms import energy, energy_identity_residual, velocity_norms, vector_norms
from .pressure import PressureSplit, SidePressure, pressure_mean_identity, pressure_split
from .constants import (
    ConstantsProcess, FunctionalConstants, LiftResult, bogovskii_witness, cell_components, divergence_lift,
    estimate_constants, estimate_poincare_constant, estimate_trace_constant, largest_generalized_eigenvalue,
    poiseuille_section_integral,
)
from .sweep import DecayFit, SweepReport, SweepRow, decay_dominance, fit_power_law, run_sweep, uniform_bound
