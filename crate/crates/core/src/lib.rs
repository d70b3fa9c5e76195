//! Counterfactually guided policy transfer for tabular POMDPs.
//!
//! The crate bundles a discrete sepsis treatment simulator, a Gumbel-Max
//! structural-causal-model engine with mixture-prior counterfactual
//! sampling, KL-regularized tabular policy iteration, the CF-PI transfer
//! loop with its baselines, and an off-policy evaluation harness.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod policy;
pub mod rng;
pub mod scm;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{MdpModel, SparseRow, TransitionModel};
pub use policy::{StochasticPolicy, ValueFunction};
pub use sim::{Action, Dataset, DynamicsConfig, PatientState, Simulator, TerminalOutcome, Trajectory};
pub use transfer::{BaselineKind, CfptConfig, EstimatedModel};
