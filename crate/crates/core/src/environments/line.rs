//! Synthetic line with a known optimum.
//!
//! Agents `0..n` sit on a path. Only agent 0 is rewarded (when its state is
//! 1), and it copies agent 1's state; each interior agent keeps state 1 only
//! if it acts with 1, with certainty when its right neighbour is 1 and with
//! probability 0.8 otherwise; the last agent's next state is its action.
//! Everyone acting with 1 keeps the all-ones start fixed forever, giving
//! `J* = (1/n) / (1 − γ)`.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::{ActionScope, LocalContext, LocalDynamics, LocalSpace, NetworkedMdp};
use crate::rng::Stream;

/// Probability an interior agent acting with 1 stays at 1 when its right neighbour is 0.
pub const WEAK_HOLD: f64 = 0.8;

#[derive(Clone, Debug)]
pub struct LineDynamics {
    n: usize,
}

impl LineDynamics {
    fn prob_one(&self, ctx: &LocalContext<'_>) -> f64 {
        let i = ctx.agent;
        if i == 0 {
            let right = ctx.state_of(1).unwrap_or(0);
            if right == 1 {
                1.0
            } else {
                0.0
            }
        } else if i + 1 == self.n {
            if ctx.own_action() == 1 {
                1.0
            } else {
                0.0
            }
        } else {
            match (ctx.state_of(i + 1).unwrap_or(0), ctx.own_action()) {
                (1, 1) => 1.0,
                (0, 1) => WEAK_HOLD,
                _ => 0.0,
            }
        }
    }
}

impl LocalDynamics for LineDynamics {
    fn transition_probs(&self, ctx: &LocalContext<'_>, out: &mut [f64]) {
        let p = self.prob_one(ctx);
        out[0] = 1.0 - p;
        out[1] = p;
    }

    fn reward(&self, ctx: &LocalContext<'_>) -> f64 {
        if ctx.agent == 0 && ctx.own_state() == 1 {
            1.0
        } else {
            0.0
        }
    }

    fn sample_transition(&self, ctx: &LocalContext<'_>, rng: &mut Stream) -> Result<usize> {
        let p = self.prob_one(ctx);
        Ok(usize::from(rng.gen::<f64>() < p))
    }

    fn action_scope(&self) -> ActionScope {
        ActionScope::Own
    }
}

/// The line environment with `n ≥ 2` agents and discount `gamma`.
pub fn line_env(n: usize, gamma: f64) -> Result<NetworkedMdp> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "line environment needs n >= 2, got {n}"
        )));
    }
    let space = LocalSpace::new(2, 2)?;
    let mdp = NetworkedMdp::new(
        format!("line{n}"),
        Graph::path(n)?,
        vec![space; n],
        gamma,
        1.0,
        vec![vec![0.0, 1.0]; n],
        Arc::new(LineDynamics { n }),
    )?;
    Ok(mdp.with_known_optimum(line_optimum(n, gamma)))
}

/// `(1/n) · 1/(1 − γ)`.
pub fn line_optimum(n: usize, gamma: f64) -> f64 {
    1.0 / n as f64 / (1.0 - gamma)
}
