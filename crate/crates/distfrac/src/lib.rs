//! Distributed-order time-fractional diffusion on an interval.
//!
//! The governing model is
//!
//! ```text
//! ∂_t^[μ] u - (a(x) u')' + q(x) u = σ(t) f(x)   on (0,1) × (0,T),
//! ```
//!
//! where `∂_t^[μ]` is a Caputo-type derivative averaged over fractional
//! orders `α ∈ (0,1)` against a nonnegative weight `μ(α)` with support
//! `[b1, b2]`. The crate provides:
//!
//! * a fully discrete forward solver (P1 finite elements in space, L1
//!   convolution quadrature in time, trapezoid quadrature in `α`),
//! * boundary-trace extraction (Dirichlet value or conormal flux) with a
//!   seeded Gaussian noise model,
//! * a numerical oracle for the small-/large-time behaviour of the
//!   observed trace, built on Hankel-type contour integrals,
//! * the two reconstruction routines: support-bound estimation by
//!   asymptotic least squares, and recovery of `μ` itself by an
//!   adjoint-state conjugate gradient iteration.
//!
//! Everything is deterministic: identical inputs and seeds reproduce
//! identical outputs bit for bit.

// validation uses `!(x > 0.0)` so that NaN fails alongside the
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod asymptotics;
pub mod expr;
pub mod fem;
pub mod forward;
mod gauss;
pub mod grid;
pub mod inverse;
pub mod weights;

pub use expr::Expr;
pub use fem::{BcKind, BoundarySpec, CoefficientField, Mesh1D, Side, TriDiag};
pub use forward::{
    add_noise, observe, step_forward, Discretization, ForwardSolution, ObservationSpec,
    ObservationTrace, ProblemSpec, Provenance, SourceSpec, TraceKind,
};
pub use grid::TimeGrid;
pub use inverse::{
    cgm_recover, estimate_support_bounds, fit_bound, BoundFit, BoundTarget, CgmOptions,
    RecoveryState, StopMode,
};
pub use weights::{AlphaQuadrature, DistributedWeights, WeightDistribution};
