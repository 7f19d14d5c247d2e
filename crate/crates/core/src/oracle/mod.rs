//! Exact enumeration on small instances.
//!
//! Everything here materialises the global chain over `z = (s, a)` and is
//! meant as ground truth for the learning code: Q-functions by direct linear
//! solve, discounted visitation, exact and truncated policy gradients, and
//! measured decay of `Q_i` in the distance of perturbed coordinates.

pub mod chain;
pub mod gradient;
pub mod mixing;
pub mod truncation;

pub use chain::{
    build_chain, discounted_visitation, exact_q, exact_return, value_iteration, ExactQ, GlobalChain, StateChain,
    CHAIN_ENTRY_LIMIT,
};
pub use gradient::{exact_policy_gradient, truncated_policy_gradient};
pub use mixing::mixing_profile;
pub use truncation::{measure_decay, truncated_q, truncation_report, DecayProfile, TailWeights, TruncatedQ, TruncationRow};
