//! Tabular episodic reinforcement learning with episode-dependent admissible
//! action sets.
//!
//! Each episode the environment reveals a context: an initial-state
//! distribution and, for every `(h, s)`, the set of actions the learner may
//! play. Transitions and rewards are shared across contexts. The crate
//! provides
//!
//! - the data model and validation ([`model`], [`instance_file`]),
//! - an exact planner used as the regret oracle, plus gap and variance
//!   analytics ([`planner`]),
//! - the optimistic doubling-epoch learner ([`mvp`]), its variant for sets
//!   revealed on arrival ([`prestage`]) and comparison learners
//!   ([`baselines`]),
//! - built-in instances ([`instances`]) and a multi-seed regret harness
//!   ([`sim`]) with CSV/SVG output ([`report`]).
//!
//! Seeds run on the rayon pool when the `parallel` feature is enabled (the
//! default); [`par::ExecMode::Sequential`] forces in-order execution.

pub mod baselines;
pub mod error;
pub mod instance_file;
pub mod instances;
pub mod model;
pub mod mvp;
pub mod par;
pub mod planner;
pub mod prestage;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    policy_is_admissible, validate_distribution, validate_model, ActionContext, ContextDistribution,
    DeterministicPolicy, Dims, MdpModel, ValidationReport,
};
