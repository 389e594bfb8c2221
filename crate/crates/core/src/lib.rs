//! Distributionally robust grasp-policy training via adversarial generation
//! of environments.
//!
//! The pipeline: procedurally generated 2D objects ([`env`]) are grasped by a
//! pixel-scoring policy ([`policy`]) against a deterministic contact oracle
//! ([`grasp`]); a cost-predictive latent embedding ([`embed`]) turns the
//! growing environment set into a discrete latent distribution; adversarial
//! latents ([`advgen`]) decoded back into objects augment the training set;
//! exact optimal transport ([`ot`]) verifies the Wasserstein-ball robustness
//! bound. [`run`] orchestrates the alternating minimax loop and the
//! augmentation baselines behind a common strategy interface.

pub mod advgen;
pub mod augment;
pub mod config;
pub mod embed;
pub mod env;
pub mod error;
pub mod geom;
pub mod grasp;
pub mod io;
pub mod nn;
pub mod ot;
pub mod policy;
pub mod rng;
pub mod run;
pub mod verify;

pub use error::{Error, Result};

/// Tool version stamped into every artifact file.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the on-disk config/manifest schema.
pub const SCHEMA_VERSION: u32 = 1;
