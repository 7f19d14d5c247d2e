//! SIS epidemic on a contact graph.
//!
//! State 0 is susceptible, 1 infected. A susceptible node stays susceptible
//! with probability `(1 − β_i(a_i))^m`, `m` being its number of infected
//! neighbours; an infected node recovers with probability `δ_i`. The raw
//! reward `1{susceptible} − c_i(a_i)` is shifted by `max_a c_i(a)` and
//! rescaled so every reward lies in `[0, 1]`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::{ActionScope, LocalContext, LocalDynamics, LocalSpace, NetworkedMdp};
use crate::rng::Stream;

pub const SUSCEPTIBLE: usize = 0;
pub const INFECTED: usize = 1;

/// Per-node epidemic parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SisParams {
    /// `δ_i`.
    pub recovery: Vec<f64>,
    /// `β_i(a)` for each node and control level.
    pub transmission: Vec<Vec<f64>>,
    /// `c_i(a)` for each node and control level.
    pub cost: Vec<Vec<f64>>,
    /// Probability each node starts infected.
    pub initial_infection: Vec<f64>,
}

impl SisParams {
    /// Identical parameters at every node.
    pub fn homogeneous(
        n: usize,
        recovery: f64,
        transmission: Vec<f64>,
        cost: Vec<f64>,
        initial_infection: f64,
    ) -> Self {
        SisParams {
            recovery: vec![recovery; n],
            transmission: vec![transmission; n],
            cost: vec![cost; n],
            initial_infection: vec![initial_infection; n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SisEnv {
    params: SisParams,
    /// `(shift, scale)` per node: `r = (raw + shift) / scale`.
    reward_affine: Vec<(f64, f64)>,
}

impl SisEnv {
    pub fn new(n: usize, params: SisParams) -> Result<Self> {
        let lens = [
            params.recovery.len(),
            params.transmission.len(),
            params.cost.len(),
            params.initial_infection.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::ShapeMismatch(format!(
                "SIS parameters for {lens:?} nodes, graph has {n}"
            )));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for i in 0..n {
            let delta = params.recovery[i];
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "recovery rate of node {i} must lie in (0, 1], got {delta}"
                )));
            }
            let beta = &params.transmission[i];
            if beta.is_empty() || beta.len() != params.cost[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "node {i}: {} transmission rates and {} costs",
                    beta.len(),
                    params.cost[i].len()
                )));
            }
            if !beta.iter().copied().all(unit) || !unit(params.initial_infection[i]) {
                return Err(Error::InvalidParameter(format!(
                    "node {i}: probabilities must lie in [0, 1]"
                )));
            }
            if params.cost[i].iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!("node {i}: non-finite cost")));
            }
        }
        let reward_affine = params
            .cost
            .iter()
            .map(|c| {
                let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = c.iter().copied().fold(f64::INFINITY, f64::min);
                (max, 1.0 + max - min)
            })
            .collect();
        Ok(SisEnv {
            params,
            reward_affine,
        })
    }

    pub fn params(&self) -> &SisParams {
        &self.params
    }

    /// Probability that node `ctx.agent` is susceptible at the next step.
    pub fn susceptible_prob(&self, ctx: &LocalContext<'_>) -> f64 {
        let i = ctx.agent;
        if ctx.own_state() == INFECTED {
            self.params.recovery[i]
        } else {
            let infected = ctx.others().filter(|&(_, s, _)| s == INFECTED).count();
            let beta = self.params.transmission[i][ctx.own_action()];
            (1.0 - beta).powi(infected as i32)
        }
    }

    /// Builds the networked MDP on `graph`.
    pub fn into_mdp(self, graph: Graph, gamma: f64) -> Result<NetworkedMdp> {
        let n = graph.n();
        let spaces = self
            .params
            .transmission
            .iter()
            .map(|b| LocalSpace::new(2, b.len()))
            .collect::<Result<Vec<_>>>()?;
        let initial = self
            .params
            .initial_infection
            .iter()
            .map(|&p| vec![1.0 - p, p])
            .collect();
        NetworkedMdp::new(
            format!("sis{n}"),
            graph,
            spaces,
            gamma,
            1.0,
            initial,
            Arc::new(self),
        )
    }
}

impl LocalDynamics for SisEnv {
    fn transition_probs(&self, ctx: &LocalContext<'_>, out: &mut [f64]) {
        let p = self.susceptible_prob(ctx);
        out[SUSCEPTIBLE] = p;
        out[INFECTED] = 1.0 - p;
    }

    fn reward(&self, ctx: &LocalContext<'_>) -> f64 {
        let i = ctx.agent;
        let healthy = if ctx.own_state() == SUSCEPTIBLE { 1.0 } else { 0.0 };
        let raw = healthy - self.params.cost[i][ctx.own_action()];
        let (shift, scale) = self.reward_affine[i];
        ((raw + shift) / scale).clamp(0.0, 1.0)
    }

    fn sample_transition(&self, ctx: &LocalContext<'_>, rng: &mut Stream) -> Result<usize> {
        let p = self.susceptible_prob(ctx);
        Ok(if rng.gen::<f64>() < p {
            SUSCEPTIBLE
        } else {
            INFECTED
        })
    }

    fn action_scope(&self) -> ActionScope {
        ActionScope::Own
    }
}
