//! Verifier-constrained entropy expansion of pre-trained flow models.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: a small reverse-mode autodiff engine, interpolant and coefficient
//! schedules, MLP velocity fields with flow-matching pretraining, ODE/SDE
//! samplers, verifiers, Adjoint Matching fine-tuning, the outer expansion
//! algorithms, an exact discrete mirror-descent oracle, and the evaluation
//! metrics. File formats, configuration and the command line live in the
//! companion `fexp` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod adjoint;
pub mod datasets;
pub mod diffcore;
pub mod expander;
pub mod flowmodel;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedules;
pub mod verifier;

pub use error::{Error, Result};
