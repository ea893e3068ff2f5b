//! Numerical toolkit for constrained variational problems driven by
//! polyharmonic operators `Δᵏ + lower order` with critical Sobolev
//! nonlinearity, on radial balls and flat slabs.

pub mod discretization;
pub mod error;
pub mod format;
pub mod linalg;
pub mod operator;
pub mod profile;
pub mod quadrature;
pub mod sobolev;
pub mod testfunctions;
pub mod variational;

pub use discretization::{
    build_geometry, half_laplacian_power, hk_norm, integrate, DiscreteField, Geometry,
    GeometryId, GeometryKind,
};
pub use error::{Error, Result};
pub use operator::{
    assemble, coercivity_check, first_eigenpair, harmonic_extension, q_curvature,
    quadratic_form, AssembledOperator, BoundaryData, CoercivityReport, EigenPair, OperatorSpec,
};
pub use profile::Profile;
pub use sobolev::{
    alpha_nk, bubble_u0, critical_exponent, inv_k0, k0, rayleigh_quotient_u0, SobolevParams,
};
pub use testfunctions::{
    build_test_function, limit_study, quotient_q, LimitStudy, QuotientRecord, TestFunctionSpec,
};
pub use variational::{
    check_condition, continuation, count_sign_changes, lagrange_multiplier, minimize,
    restore_constraint, seed_feasible, ConstraintSpec, ContinuationRecord, ContinuationResult,
    MinimizeOptions, MinimizeResult,
};
