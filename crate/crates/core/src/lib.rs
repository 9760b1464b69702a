//! Numerics for symmetric stable processes with anisotropic jump
//! structure: characteristic exponents, transition densities by Fourier
//! inversion, Green functions of balls, exit-distribution sampling, and
//! Monte Carlo checks of mean value, Harnack, and oscillation-decay
//! estimates for harmonic functions of such processes.

pub mod density;
pub mod error;
pub mod geom;
pub mod green;
pub mod harnack;
pub mod hoelder;
pub mod measure;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod sphere;
pub mod stats;

pub use density::{
    alias_relative_bound, default_grid_extent, default_grid_spacing, density_at,
    time_density_grid, unit_density_grid, unit_density_grid_with_tail_tol,
    verify_heat_kernel_bound, DensityEval, HeatKernelBound, TransitionDensityGrid,
};
pub use error::{Error, Result};
pub use green::{
    averaged_exit_field, exit_ensemble, green_point, green_profile, green_profile_with_resolution,
    killed_green, verify_average_bound, verify_average_comparison, verify_near_diagonal_floor,
    write_claim_samples_csv, AveragedExitField, ClaimSample, ExitEnsemble, GreenBoundReport,
    GreenClaim, GreenMcBudget, KilledGreenEstimate, RadialGreenProfile,
};
pub use harnack::{
    estimate_harnack_constant, exit_lattice, harmonic_extend, harmonic_extend_pooled,
    nested_offsets, uniform_offsets, verify_weak_harnack, ExitLattice, ExteriorFunction,
    ExteriorTerm, FieldReduction, HarmonicField, HarnackEnsemble, HarnackMcBudget, HarnackParams,
    HarnackReport,
};
pub use hoelder::{
    annulus_tail_decay, estimate_hoelder_exponent, hoelder_constants, run_oscillation_iteration,
    ExponentFit, HoelderIteration, OscCase, TailDecayReport,
};
pub use measure::SpectralMeasure;
pub use model::{NondegeneracyCertificate, StableModel};
pub use simulate::{
    build_scheme, exit_radius_cdf, poisson_kernel_isotropic, sample_exit, sample_exit_ensemble,
    sample_exit_relative, sample_increment, ExitSample, IncrementScheme,
};
pub use sphere::{sphere_quadrature, SphereQuadrature};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
