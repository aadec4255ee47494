//! Exact verification engine for the quadratic relations of the deformed
//! W-algebra attached to the twisted affine root system of type A_{2N}^(2).
//!
//! Everything downstream of parameter sampling is exact rational arithmetic:
//! the two deformation parameters are sampled as rationals `u` (with
//! `x = u^2`, so half-integer powers of `x` stay rational) and `t`
//! (standing in for `x^r`; the generic exponent `r` itself is never given a
//! numeric value).  An identity in `(x, x^r)` is accepted once it holds at
//! three independent sample points.
//!
//! The crate is organised bottom-up:
//!
//! * [`coeff`] — rationals, parameter points, q-integers, the twisted
//!   Cartan-type matrix `B(m)` and its closed-form inverse `I(m)`;
//! * [`series`] — truncated Laurent series, factored rational functions with
//!   monomial roots, delta-function extraction by residues;
//! * [`heisenberg`] — the deformed Heisenberg algebra, vertex operators
//!   `A_i`, `Y_i`, `S_i` and their two-point functions;
//! * [`currents`] — the basic currents `Λ_s`, the W-currents `T_i` and the
//!   duality between levels `i` and `2N+1-i`;
//! * [`quadratic`] — assembly and verification of the quadratic relations
//!   and the fusion (pole-collapse) relations;
//! * [`screening`] — commutation of `T_1` with the screening currents;
//! * [`classical`] — the classical (Poisson) limit, checked numerically in
//!   high-precision floats;
//! * [`fock`] — an independent oracle: truncated Fock-space matrices;
//! * [`report`] — run configuration and machine-readable reports.

pub mod coeff;
pub mod series;
pub mod heisenberg;
pub mod currents;
pub mod quadratic;
pub mod screening;
pub mod classical;
pub mod fock;
pub mod report;

mod error;
pub use error::{EngineError, Result};
