//! Modulus-of-continuity certificates for the dissipative SQG equation.
//!
//! A modulus `ω` is preserved by the evolution when, at every separation `ξ`,
//! the convection bound `Ω(ξ) ω'(ξ)` is beaten by the dissipation
//! functional `κ C D(ξ)`. This module builds the piecewise modulus, evaluates
//! both functionals by singular quadrature and searches for parameters that
//! make the inequality hold on a wide logarithmic grid.

mod certify;
mod functionals;
mod modulus;

use thiserror::Error;

use crate::quadrature::QuadError;

pub use certify::{
    case_bounds, default_xi_grid, doubling_deficit, dominance_margin, dominance_report,
    far_convection_bound, far_margin_bound, find_admissible, fit_case_constants,
    growth_comparison_check, log_grid, near_convection_bound, smallness_constant, CaseBounds,
    CaseConstants, CertificateConstants, DominanceReport, MarginPoint, Regime, SearchBudget,
    SearchOutcome,
};
pub use functionals::{dissipation_functional, riesz_modulus, Dissipation};
pub use modulus::{
    knv_omega, knv_omega_prime, validate_params, CappedLinear, Constraint, GammaBounds,
    KnvModulus, Modulus, ParamReport, PowerTail, Side, Violation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocError {
    #[error("invalid modulus parameters: {}", format_violations(.0))]
    InvalidModulus(Vec<Violation>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature failed at xi = {xi:e}: {source}")]
    Quadrature {
        xi: f64,
        #[source]
        source: QuadError,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
