//! Numerical toolkit for variational calculus and optimal control built on
//! Riesz-Caputo fractional derivatives.
//!
//! The crate is organised around five subsystems:
//!
//! * [`exprdsl`] — a small expression language for Lagrangians, dynamics and
//!   symmetry generators, with exact symbolic differentiation.
//! * [`fracops`] — discrete fractional operators (Riemann-Liouville, Caputo,
//!   Riesz, Riesz-Caputo) on uniform grids, plus high-accuracy quadrature
//!   oracles for the defining integrals.
//! * [`variational`] — the fractional action functional, Euler-Lagrange
//!   residuals, and a direct Ritz solver for fixed-endpoint extremals.
//! * [`noether`] — invariance checks and fractional conservation-law
//!   residuals evaluated along numerical extremals.
//! * [`optctrl`] — fractional optimal control: Hamiltonian construction,
//!   Pontryagin-system residuals, a dense solver for linear-quadratic
//!   problems, and the Hamiltonian-form conservation law.
//!
//! The [`cli`] module exposes all pipelines through the `frac-noether`
//! binary, reading JSON problem files and emitting CSV/JSON reports.

pub mod cli;
pub mod exprdsl;
pub mod fracops;
mod linalg;
pub mod noether;
pub mod optctrl;
pub mod variational;
