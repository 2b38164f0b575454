//! Phase-space ensemble mechanics.
//!
//! The library revolves around one idea: every smooth phase-space observable
//! `A(q, p)` generates its own canonical flow, its own transported probability
//! density and action field, and its own self-adjoint grid operator. The crate
//! provides
//!
//! - [`expr`]: symbolic observables (parsing, differentiation, Poisson
//!   brackets, associated Lagrangians),
//! - [`flow`]: symplectic integration of the canonical equations of an
//!   arbitrary generator, with volume-preservation checks,
//! - [`ensemble`]: Monte-Carlo realizations of phase-space ensembles and
//!   their Lagrangian/Eulerian expectation values,
//! - [`field`]: grid-based density and action fields, their semi-Lagrangian
//!   transport, and the complex state `sqrt(rho) * exp(i S / hbar)`,
//! - [`operator`]: Hermitian grid operators generated by observables, their
//!   spectra, commutators and the three equivalent expectation-value routes,
//! - [`quantize`]: the projection to configuration space producing quantum
//!   operators, Schrödinger evolution, Born-rule probabilities and Wigner
//!   functions for classical-limit comparisons.

pub mod ensemble;
pub mod expr;
pub mod field;
pub mod flow;
pub mod operator;

mod util;

pub use ensemble::SampleCloud;
pub use field::{GridField, PhaseGrid};
pub use expr::ObservableExpr;
pub use flow::{FlowConfig, PhaseState};
pub use operator::{PhaseOperator, Spectrum};
