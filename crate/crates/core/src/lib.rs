//! Learning-based dispatching for a single-machine shop floor.
//!
//! The crate bundles a seeded discrete-time simulator ([`sim`]), the 2-D
//! observation encoding ([`codec`]), a softmax policy network ([`policy`])
//! trained by REINFORCE ([`reinforce`]) or by imitating rule-based
//! dispatchers ([`heuristics`]), manifold-alignment policy transfer between
//! shop configurations ([`transfer`]), and an experiment harness
//! ([`harness`]).

pub mod codec;
pub mod config;
pub mod error;
pub mod harness;
pub mod heuristics;
pub mod metrics;
pub mod policy;
pub mod reinforce;
pub mod rng;
pub mod sim;
pub mod transfer;

pub use codec::{encode_state, remove_job_columns, Geometry, StateMatrix, StateVariant};
pub use config::{IntRange, Objective, ShopConfig};
pub use error::{Error, Result};
pub use policy::PolicyParams;
pub use sim::{Action, DispatchOutcome, JobSpec, Shop, ShopState};
