//! The networked MDP abstraction and seeded trajectory simulation.
//!
//! Each agent's next local state is drawn independently from a kernel that
//! sees only the states and actions of its one-hop neighbourhood `N_i`, and
//! the global kernel is the product of the local ones. Rewards likewise see
//! `(s_{N_i}, a_{N_i})`; models whose kernels and rewards only read the
//! agent's own action declare [`ActionScope::Own`], which lets the exact
//! evaluator factorise the state chain.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Neighborhood};
use crate::policy::LocalizedPolicy;
use crate::rng::{sample_index, Purpose, SeedKey, Stream};

/// Row-sum tolerance for per-agent kernels.
pub const KERNEL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LocalSpace {
    pub states: usize,
    pub actions: usize,
}

impl LocalSpace {
    pub fn new(states: usize, actions: usize) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::InvalidParameter(format!(
                "local space sizes must be positive, got |S|={states}, |A|={actions}"
            )));
        }
        Ok(LocalSpace { states, actions })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionScope {
    /// Kernels and rewards depend on the agent's own action only.
    Own,
    /// Kernels or rewards may read neighbours' actions.
    Neighbors,
}

/// The states and actions of `N_i`, aligned with its sorted member list.
#[derive(Clone, Copy, Debug)]
pub struct LocalContext<'a> {
    pub agent: usize,
    pub members: &'a [usize],
    pub position: usize,
    pub states: &'a [usize],
    pub actions: &'a [usize],
    pub space: LocalSpace,
}

impl LocalContext<'_> {
    pub fn own_state(&self) -> usize {
        self.states[self.position]
    }

    pub fn own_action(&self) -> usize {
        self.actions[self.position]
    }

    fn slot(&self, agent: usize) -> Option<usize> {
        self.members.binary_search(&agent).ok()
    }

    pub fn state_of(&self, agent: usize) -> Option<usize> {
        self.slot(agent).map(|k| self.states[k])
    }

    pub fn action_of(&self, agent: usize) -> Option<usize> {
        self.slot(agent).map(|k| self.actions[k])
    }

    /// `(agent, state, action)` for every neighbour other than the agent itself.
    pub fn others(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != self.position)
            .map(move |(k, &j)| (j, self.states[k], self.actions[k]))
    }
}

/// Per-agent transition kernels and rewards of a networked MDP.
pub trait LocalDynamics: Send + Sync + fmt::Debug {
    /// Writes `P(s_i' = · | s_{N_i}, a_{N_i})` into `out` (length `|S_i|`).
    fn transition_probs(&self, ctx: &LocalContext<'_>, out: &mut [f64]);

    /// `r_i(s_{N_i}, a_{N_i})`, within `[0, r̄]`.
    fn reward(&self, ctx: &LocalContext<'_>) -> f64;

    /// Draws the next local state. The default inverts the exact kernel.
    fn sample_transition(&self, ctx: &LocalContext<'_>, rng: &mut Stream) -> Result<usize> {
        let mut probs = vec![0.0; ctx.space.states];
        self.transition_probs(ctx, &mut probs);
        check_distribution(ctx.agent, &probs)?;
        Ok(sample_index(&probs, rng.gen::<f64>()))
    }

    fn action_scope(&self) -> ActionScope {
        ActionScope::Neighbors
    }
}

pub(crate) fn check_distribution(agent: usize, probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidDistribution {
            agent,
            reason: format!("entry {p} is negative or not finite"),
        });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > KERNEL_TOLERANCE {
        return Err(Error::InvalidDistribution {
            agent,
            reason: format!("probabilities sum to {total}"),
        });
    }
    Ok(())
}

/// Reusable buffers for gathering neighbourhood sub-vectors.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    states: Vec<usize>,
    actions: Vec<usize>,
}

#[derive(Clone)]
pub struct NetworkedMdp {
    name: String,
    graph: Graph,
    spaces: Vec<LocalSpace>,
    neighborhoods: Vec<Neighborhood>,
    gamma: f64,
    reward_bound: f64,
    initial: Vec<Vec<f64>>,
    dynamics: Arc<dyn LocalDynamics>,
    optimum: Option<f64>,
}

impl fmt::Debug for NetworkedMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NetworkedMdp")
            .field("name", &self.name)
            .field("n", &self.graph.n())
            .field("gamma", &self.gamma)
            .field("reward_bound", &self.reward_bound)
            .field("dynamics", &self.dynamics)
            .finish()
    }
}

impl NetworkedMdp {
    /// `initial[i]` is agent `i`'s initial local-state distribution; the
    /// global initial distribution is their product.
    pub fn new(
        name: impl Into<String>,
        graph: Graph,
        spaces: Vec<LocalSpace>,
        gamma: f64,
        reward_bound: f64,
        initial: Vec<Vec<f64>>,
        dynamics: Arc<dyn LocalDynamics>,
    ) -> Result<Self> {
        let n = graph.n();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in (0, 1), got {gamma}"
            )));
        }
        if !(reward_bound > 0.0 && reward_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reward bound must be positive, got {reward_bound}"
            )));
        }
        if spaces.len() != n || initial.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} agents but {} local spaces and {} initial distributions",
                spaces.len(),
                initial.len()
            )));
        }
        for (i, (dist, space)) in initial.iter().zip(&spaces).enumerate() {
            if dist.len() != space.states {
                return Err(Error::ShapeMismatch(format!(
                    "initial distribution of agent {i} has {} entries, |S_i| = {}",
                    dist.len(),
                    space.states
                )));
            }
            check_distribution(i, dist)?;
        }
        let neighborhoods = (0..n)
            .map(|i| graph.khop_neighborhood(i, 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkedMdp {
            name: name.into(),
            graph,
            spaces,
            neighborhoods,
            gamma,
            reward_bound,
            initial,
            dynamics,
            optimum: None,
        })
    }

    /// Declares the exact optimal objective value, when known in closed form.
    pub fn with_known_optimum(mut self, optimum: f64) -> Self {
        self.optimum = Some(optimum);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn spaces(&self) -> &[LocalSpace] {
        &self.spaces
    }

    pub fn space(&self, i: usize) -> LocalSpace {
        self.spaces[i]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.optimum
    }

    pub fn dynamics(&self) -> &dyn LocalDynamics {
        self.dynamics.as_ref()
    }

    /// One-hop neighbourhood `N_i`.
    pub fn neighborhood(&self, i: usize) -> &Neighborhood {
        &self.neighborhoods[i]
    }

    pub fn initial(&self, i: usize) -> &[f64] {
        &self.initial[i]
    }

    /// `∏ |S_i|`, or `None` on overflow.
    pub fn global_state_count(&self) -> Option<u128> {
        self.spaces
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.states as u128))
    }

    /// `∏ |A_i|`, or `None` on overflow.
    pub fn global_action_count(&self) -> Option<u128> {
        self.spaces
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.actions as u128))
    }

    pub fn check_state(&self, s: &[usize]) -> Result<()> {
        self.check_vector(s, |sp| sp.states, "state")
    }

    pub fn check_action(&self, a: &[usize]) -> Result<()> {
        self.check_vector(a, |sp| sp.actions, "action")
    }

    fn check_vector(&self, v: &[usize], size: impl Fn(&LocalSpace) -> usize, what: &str) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::ShapeMismatch(format!(
                "global {what} has length {}, expected {}",
                v.len(),
                self.n()
            )));
        }
        for (position, (&value, space)) in v.iter().zip(&self.spaces).enumerate() {
            let radix = size(space);
            if value >= radix {
                return Err(Error::ValueOutOfRange {
                    position,
                    value,
                    radix,
                });
            }
        }
        Ok(())
    }

    /// Gathers `(s_{N_i}, a_{N_i})` from global vectors.
    pub fn context<'a>(
        &'a self,
        i: usize,
        s: &[usize],
        a: &[usize],
        scratch: &'a mut Scratch,
    ) -> LocalContext<'a> {
        let nb = &self.neighborhoods[i];
        scratch.states.clear();
        scratch.actions.clear();
        scratch.states.extend(nb.members.iter().map(|&j| s[j]));
        scratch.actions.extend(nb.members.iter().map(|&j| a[j]));
        LocalContext {
            agent: i,
            members: &nb.members,
            position: nb.center_position(),
            states: &scratch.states,
            actions: &scratch.actions,
            space: self.spaces[i],
        }
    }

    /// `r_i(s_{N_i}, a_{N_i})` for every agent.
    pub fn rewards(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        (0..self.n())
            .map(|i| self.dynamics.reward(&self.context(i, s, a, &mut scratch)))
            .collect()
    }

    /// Draws `s(0)` using one initial-state stream per agent.
    pub fn sample_initial(&self, streams: &mut [Stream]) -> Vec<usize> {
        self.initial
            .iter()
            .zip(streams.iter_mut())
            .map(|(dist, rng)| sample_index(dist, rng.gen::<f64>()))
            .collect()
    }

    /// One transition: each `s_i'` is drawn from its own kernel using the
    /// agent's own stream; rewards are computed on the pre-transition pair.
    pub fn sample_step(
        &self,
        s: &[usize],
        a: &[usize],
        streams: &mut [Stream],
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        self.check_state(s)?;
        self.check_action(a)?;
        if streams.len() != self.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} transition streams for {} agents",
                streams.len(),
                self.n()
            )));
        }
        let mut scratch = Scratch::default();
        let mut next = Vec::with_capacity(self.n());
        let mut rewards = Vec::with_capacity(self.n());
        for (i, rng) in streams.iter_mut().enumerate() {
            let ctx = self.context(i, s, a, &mut scratch);
            rewards.push(self.dynamics.reward(&ctx));
            next.push(self.dynamics.sample_transition(&ctx, rng)?);
        }
        Ok((next, rewards))
    }

    /// Exhaustively checks every per-agent kernel row and reward over all
    /// `(s_{N_i}, a_{N_i})`, skipping agents whose neighbourhood has more
    /// than `limit` configurations. Returns the number of rows checked.
    pub fn validate_kernels(&self, limit: u128) -> Result<u128> {
        let mut checked = 0u128;
        for i in 0..self.n() {
            let nb = &self.neighborhoods[i];
            let mut radices: Vec<usize> = nb.members.iter().map(|&j| self.spaces[j].states).collect();
            radices.extend(nb.members.iter().map(|&j| self.spaces[j].actions));
            let codec = crate::codec::MixedRadixCodec::new(radices)?;
            if codec.size() > limit {
                continue;
            }
            let m = nb.len();
            let mut values = vec![0; 2 * m];
            let mut probs = vec![0.0; self.spaces[i].states];
            for idx in 0..codec.size() {
                codec.decode_into(idx, &mut values)?;
                let ctx = LocalContext {
                    agent: i,
                    members: &nb.members,
                    position: nb.center_position(),
                    states: &values[..m],
                    actions: &values[m..],
                    space: self.spaces[i],
                };
                self.dynamics.transition_probs(&ctx, &mut probs);
                check_distribution(i, &probs)?;
                let r = self.dynamics.reward(&ctx);
                if !(0.0..=self.reward_bound).contains(&r) {
                    return Err(Error::InvalidParameter(format!(
                        "reward {r} of agent {i} outside [0, {}]",
                        self.reward_bound
                    )));
                }
                checked += 1;
            }
        }
        Ok(checked)
    }
}

/// A sampled trajectory `(s(t), a(t), r(t))` for `t = 0..=T`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    n: usize,
    seed: u64,
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

impl Trajectory {
    /// Number of recorded steps, `T + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The stream key the trajectory was generated from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self, t: usize) -> &[usize] {
        &self.states[t * self.n..(t + 1) * self.n]
    }

    pub fn action(&self, t: usize) -> &[usize] {
        &self.actions[t * self.n..(t + 1) * self.n]
    }

    pub fn rewards(&self, t: usize) -> &[f64] {
        &self.rewards[t * self.n..(t + 1) * self.n]
    }

    /// Global stage reward `r(t) = (1/n) Σ_i r_i(t)`.
    pub fn global_reward(&self, t: usize) -> f64 {
        self.rewards(t).iter().sum::<f64>() / self.n as f64
    }
}

/// Simulates `T + 1` steps under a localized policy.
///
/// Streams are keyed by `(key, purpose, agent)`: initial state, action and
/// transition draws of each agent come from separate substreams.
pub fn rollout<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    horizon: usize,
    key: SeedKey,
) -> Result<Trajectory> {
    let n = mdp.n();
    if policy.n_agents() != n {
        return Err(Error::ShapeMismatch(format!(
            "policy covers {} agents, MDP has {n}",
            policy.n_agents()
        )));
    }
    for i in 0..n {
        let space = mdp.space(i);
        if policy.state_count(i) != space.states || policy.action_count(i) != space.actions {
            return Err(Error::ShapeMismatch(format!(
                "policy of agent {i} is {}x{}, local space is {}x{}",
                policy.state_count(i),
                policy.action_count(i),
                space.states,
                space.actions
            )));
        }
    }
    let mut init = key.agent_streams(Purpose::Initial, n);
    let mut act = key.agent_streams(Purpose::Action, n);
    let mut trans = key.agent_streams(Purpose::Transition, n);

    let steps = horizon + 1;
    let mut traj = Trajectory {
        n,
        seed: key.value(),
        states: Vec::with_capacity(steps * n),
        actions: Vec::with_capacity(steps * n),
        rewards: Vec::with_capacity(steps * n),
    };
    // the policy is fixed for the whole rollout, so its rows are computed once
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let space = mdp.space(i);
            let mut rows = vec![0.0; space.states * space.actions];
            for (state, row) in rows.chunks_mut(space.actions).enumerate() {
                policy.action_probs_into(i, state, row);
            }
            rows
        })
        .collect();
    let mut s = mdp.sample_initial(&mut init);
    let mut a = vec![0; n];
    let mut next = Vec::with_capacity(n);
    let mut scratch = Scratch::default();
    for t in 0..steps {
        for (i, rng) in act.iter_mut().enumerate() {
            let k = mdp.space(i).actions;
            a[i] = sample_index(&probs[i][s[i] * k..(s[i] + 1) * k], rng.gen::<f64>());
        }
        traj.states.extend_from_slice(&s);
        traj.actions.extend_from_slice(&a);
        next.clear();
        for (i, rng) in trans.iter_mut().enumerate() {
            let ctx = mdp.context(i, &s, &a, &mut scratch);
            traj.rewards.push(mdp.dynamics.reward(&ctx));
            if t + 1 < steps {
                next.push(mdp.dynamics.sample_transition(&ctx, rng)?);
            }
        }
        if t + 1 < steps {
            std::mem::swap(&mut s, &mut next);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::line::line_env;
    use crate::policy::LocalizedPolicyTable;

    #[test]
    fn horizon_zero_has_one_step() {
        let mdp = line_env(4, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let traj = rollout(&mdp, &policy, 0, SeedKey::new(1)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.state(0), &[1, 1, 1, 1]);
    }

    #[test]
    fn identical_seeds_give_identical_steps() {
        let mdp = line_env(5, 0.7).unwrap();
        let s = vec![1, 0, 1, 0, 1];
        let a = vec![1, 1, 0, 1, 1];
        let key = SeedKey::new(9);
        let mut r1 = key.agent_streams(Purpose::Transition, 5);
        let mut r2 = key.agent_streams(Purpose::Transition, 5);
        for _ in 0..20 {
            assert_eq!(
                mdp.sample_step(&s, &a, &mut r1).unwrap(),
                mdp.sample_step(&s, &a, &mut r2).unwrap()
            );
        }
    }

    #[test]
    fn sample_step_validates_inputs() {
        let mdp = line_env(3, 0.7).unwrap();
        let mut streams = SeedKey::new(0).agent_streams(Purpose::Transition, 3);
        assert!(mdp.sample_step(&[0, 2, 0], &[0, 0, 0], &mut streams).is_err());
        assert!(mdp.sample_step(&[0, 1], &[0, 0, 0], &mut streams).is_err());
        assert!(mdp.sample_step(&[0, 1, 0], &[0, 0, 0], &mut streams[..2]).is_err());
    }

    #[derive(Debug)]
    struct Broken;
    impl LocalDynamics for Broken {
        fn transition_probs(&self, _: &LocalContext<'_>, out: &mut [f64]) {
            out.fill(0.7);
        }
        fn reward(&self, _: &LocalContext<'_>) -> f64 {
            0.0
        }
    }

    #[test]
    fn invalid_kernel_is_reported() {
        let g = Graph::path(2).unwrap();
        let sp = LocalSpace::new(2, 1).unwrap();
        let mdp = NetworkedMdp::new(
            "broken",
            g,
            vec![sp; 2],
            0.5,
            1.0,
            vec![vec![1.0, 0.0]; 2],
            Arc::new(Broken),
        )
        .unwrap();
        let mut streams = SeedKey::new(0).agent_streams(Purpose::Transition, 2);
        assert!(matches!(
            mdp.sample_step(&[0, 0], &[0, 0], &mut streams),
            Err(Error::InvalidDistribution { .. })
        ));
        assert!(mdp.validate_kernels(1 << 20).is_err());
    }

    #[test]
    fn rewards_recorded_match_reward_function() {
        let mdp = line_env(4, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let traj = rollout(&mdp, &policy, 50, SeedKey::new(3)).unwrap();
        for t in 0..traj.len() {
            assert_eq!(mdp.rewards(traj.state(t), traj.action(t)), traj.rewards(t));
        }
    }
}
