//! Degradation fingerprinting and residual-diffusion verification toolkit.
//!
//! The crate has two halves:
//!
//! * texture side: [`corpus`] ingestion, [`glcm`] multi-angle multi-scale
//!   co-occurrence fingerprints, synthetic [`degrade`] operators, competing
//!   [`baselines`] characterizations and the [`classify`] KNN benchmark
//!   ([`bench`] wires them together);
//! * diffusion side: the residual-conditioned [`diffusion`] scheduler and the
//!   training objectives in [`losses`], each with analytic gradients checked
//!   against finite differences.
//!
//! The [`cli`] module backs the `degscope` executable.

pub mod baselines;
pub mod bench;
pub mod classify;
pub mod cli;
pub mod corpus;
pub mod degrade;
pub mod diffusion;
pub mod error;
pub mod glcm;
pub mod losses;

pub use error::{Error, Result};
