//! Scalable actor-critic: the truncated-Q TD critic and the κ-hop actor.

pub mod actor;
pub mod critic;
pub mod train;

pub use actor::{actor_gradient, ActorSchedule};
pub use critic::{critic_td_step, run_critic, CriticSchedule, TruncatedQTable};
pub use train::{train, IterationReport, TrainOutcome, TrainSpec};
