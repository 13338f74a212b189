//! Weakly asymmetric corner-growth bridges.
//!
//! Exact samplers for the tilted bridge measure, continuous-time corner-flip
//! dynamics, scaled observables in the diffusive, hydrodynamic and KPZ
//! regimes, reference PDE solvers, discrete Dirichlet heat kernels and the
//! statistical checks tying them together.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod lattice;
pub mod num;
pub mod pde;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{BridgeConfig, CornerSet, Flip, FlipDir, ParticleConfig};
pub use num::Real;

pub type ModelParams = gibbs::ModelParams<f64>;
pub type ModelParams32 = gibbs::ModelParams<f32>;
pub type SigmaProfile = gibbs::SigmaProfile<f64>;
pub type SigmaProfile32 = gibbs::SigmaProfile<f32>;
pub type BridgeCovariance = gibbs::BridgeCovariance<f64>;
pub type BridgeCovariance32 = gibbs::BridgeCovariance<f32>;
pub type PdeState = pde::PdeState<f64>;
pub type PdeState32 = pde::PdeState<f32>;
pub type HeatKernel = kernel::HeatKernel<f64>;
pub type HeatKernel32 = kernel::HeatKernel<f32>;
pub type KernelEval = kernel::KernelEval<f64>;
pub type KernelEval32 = kernel::KernelEval<f32>;
