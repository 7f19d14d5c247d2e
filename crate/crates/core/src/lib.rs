//! Networked multi-agent MDPs with localized softmax policies.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`], [`codec`], [`mdp`]: interaction graphs, κ-hop neighbourhoods,
//!   flat indexing of neighbourhood configurations and the factorised
//!   networked MDP abstraction with seeded trajectory simulation.
//! * [`environments`]: the synthetic line, multi-access wireless grid, SIS
//!   epidemic and traffic-signal models.
//! * [`policy`]: tabular softmax policies and their score functions.
//! * [`sac`]: the truncated-Q temporal-difference critic and the κ-hop
//!   policy-gradient actor.
//! * [`oracle`]: exact enumeration on small instances: full Q-functions,
//!   discounted visitation, exact and truncated gradients, decay profiles.
//! * [`experiment`]: configuration, evaluation, κ-sweeps, the wireless
//!   benchmark and CSV/JSON output used by the `netsac` binary.

pub mod codec;
pub mod environments;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod mdp;
pub mod oracle;
pub mod parallel;
pub mod policy;
pub mod rng;
pub mod sac;
pub mod stats;

pub use codec::MixedRadixCodec;
pub use error::{Error, Result};
pub use graph::{Graph, Neighborhood};
pub use mdp::{LocalContext, LocalDynamics, LocalSpace, NetworkedMdp, Trajectory};
pub use parallel::Execution;
pub use policy::{LocalizedPolicy, LocalizedPolicyTable, PolicyTable};
