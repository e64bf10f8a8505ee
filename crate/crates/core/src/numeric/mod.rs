//! Special functions and Dirichlet-distribution primitives.

mod dirichlet;
mod simplex;
pub mod special;

pub use dirichlet::{
    dirichlet_entropy, dirichlet_kl, dirichlet_log_pdf, dirichlet_sample, fit_dirichlet_mle,
    DirichletFit, DirichletParams, MLE_MAX_ITERATIONS, MLE_TOLERANCE,
};
pub(crate) use dirichlet::{entropy_slice, kl_slice, log_pdf_slice};
pub use simplex::{SimplexVector, SCORE_FLOOR, SIMPLEX_TOL};
pub(crate) use simplex::{argmax, clamp_scores, log_sum_exp};
pub use special::{digamma, inverse_digamma, ln_gamma, trigamma, EULER_GAMMA};
