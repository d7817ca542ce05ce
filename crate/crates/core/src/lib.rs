//! Contrastive similarity matching (CSM) networks: layered recurrent networks
//! with feedforward, feedback and lateral connections that relax to fixed
//! points and learn from the difference between a free and a nudged phase.
//!
//! The EP baselines share the same dynamics and differ only in the update rule.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod learning;
pub mod linear;
pub mod net;
pub mod structured;
pub mod verify;

pub use error::{CsmError, Result};
pub use learning::{AlgorithmKind, LearningRates};
pub use net::{ActivationSpec, NetworkState, NetworkTopology, Parameters, Sample};
