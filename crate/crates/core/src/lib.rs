//! Core of the two-hop reasoning laboratory.
//!
//! Everything here is pure computation over in-memory values: the symbolic
//! two-hop-with-distractors task generator, a small attention-only
//! transformer with a fully traced forward pass and hand-written backward
//! pass, Adam training, interpretability probes (attention logits, logit
//! lens, value decomposition, phase detection) and the three-parameter
//! dynamical model. File formats, the CLI and run directories live in the
//! `twohop-lab` crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod interp;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod taskgen;
pub mod tensor;
pub mod threeparam;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
