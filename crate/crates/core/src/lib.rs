//! Numerical toolkit for the self-adjoint time operator
//! `Tw = i hbar (d/dE + (1/2) d/dE ln w(E))` on the weighted energy space
//! `L^2(R, w(E) dE)`, truncated to a uniform grid.
//!
//! The crate provides
//!
//! - weight functions and the validator for their admissibility constraints
//!   ([`weights`]),
//! - grids, weighted trapezoid quadrature and test functions
//!   ([`discretization`]),
//! - matrix-free and dense realizations of `T0`, `Tw`, `H = E .` and the
//!   flattening isometry `Uw = w^(1/2) .` ([`operators`]),
//! - quantified residual checks for Hermiticity (with boundary-term
//!   accounting), unitary equivalence, the canonical commutation relation,
//!   domain membership, deficiency indices and the energy spectrum
//!   ([`verification`]),
//! - the closed-form unitary group generated by `Tw` with unitarity and
//!   group-law checks ([`propagator`]),
//! - report aggregation and file formats ([`report`], [`io`]).

pub mod discretization;
pub mod error;
pub mod io;
pub mod operators;
pub mod propagator;
pub mod report;
pub mod verification;
pub mod weights;

pub use discretization::{
    flat_norm, inner_product, weighted_norm, Grid, QuadratureRule, TestFunction, WaveFunction,
};
pub use error::{Error, Result};
pub use operators::{
    apply_h, apply_t0, apply_tw, apply_uw, boundary_exclusion, build_tw_matrix, commutator_th,
    Construction, OperatorMatrix, PhysicalConstants, StencilOrder, UwDirection,
};
pub use propagator::{
    generator_consistency_residual, group_property_residual, propagate, propagate_with,
    propagator_unitarity_residual, PropagationStep, ShiftInterpolation,
};
pub use report::{CheckTolerances, RunMeta, VerificationReport};
pub use verification::{
    commutation_residual, deficiency_index_estimate, deficiency_solution, domain_membership_check,
    energy_spectrum, hermiticity_residual, matrix_hermiticity_check, unitary_equivalence_residual,
    DeficiencyIndex, DeficiencySign, DeficiencyVerdict, DomainReport, DomainTolerances,
    ResidualRecord, SpectrumRecord,
};
pub use weights::{
    constraint_passing_registry, validate_weight, ValidationTolerances, Weight, WeightSpec,
    WeightValidationReport,
};
