//! Concrete networked MDPs.

pub mod line;
pub mod sis;
pub mod traffic;
pub mod wireless;

pub use line::{line_env, line_optimum};
pub use sis::{SisEnv, SisParams};
pub use traffic::{TrafficEnv, TrafficParams};
pub use wireless::{aloha_policy, WirelessGridEnv, WirelessParams};
