//! Truncated Q-tables and the temporal-difference critic.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec::MixedRadixCodec;
use crate::error::{Error, Result};
use crate::mdp::{rollout, NetworkedMdp, Trajectory};
use crate::parallel::Execution;
use crate::policy::LocalizedPolicy;
use crate::rng::SeedKey;

/// Tables with at most this many entries are stored densely.
pub const DENSE_LIMIT: u128 = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    /// Untouched entries are implicitly zero.
    Sparse(HashMap<u128, f64>),
}

/// `Q̂_i` indexed by `(s_{N_i^κ}, a_{N_i^κ})`.
///
/// Entries are addressed by a mixed-radix code over the member states
/// followed by the member actions, members in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedQTable {
    agent: usize,
    kappa: usize,
    members: Vec<usize>,
    codec: MixedRadixCodec,
    storage: Storage,
}

impl TruncatedQTable {
    /// All-zero table over `N_i^κ`.
    pub fn zeros(mdp: &NetworkedMdp, agent: usize, kappa: usize) -> Result<Self> {
        let nb = mdp.graph().khop_neighborhood(agent, kappa)?;
        let mut radices: Vec<usize> = nb.members.iter().map(|&j| mdp.space(j).states).collect();
        radices.extend(nb.members.iter().map(|&j| mdp.space(j).actions));
        let codec = MixedRadixCodec::new(radices)?;
        let storage = if codec.size() <= DENSE_LIMIT {
            Storage::Dense(vec![0.0; codec.size() as usize])
        } else {
            Storage::Sparse(HashMap::new())
        };
        Ok(TruncatedQTable {
            agent,
            kappa,
            members: nb.members,
            codec,
            storage,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn codec(&self) -> &MixedRadixCodec {
        &self.codec
    }

    pub fn size(&self) -> u128 {
        self.codec.size()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Index of the neighbourhood configuration inside global `(s, a)`.
    pub fn index_of(&self, s: &[usize], a: &[usize]) -> u128 {
        self.codec.encode_iter(
            self.members
                .iter()
                .map(|&j| s[j])
                .chain(self.members.iter().map(|&j| a[j])),
        )
    }

    fn check(&self, index: u128) -> Result<()> {
        if index >= self.codec.size() {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.codec.size(),
            });
        }
        Ok(())
    }

    pub fn get(&self, index: u128) -> Result<f64> {
        self.check(index)?;
        Ok(self.get_unchecked(index))
    }

    fn get_unchecked(&self, index: u128) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[index as usize],
            Storage::Sparse(m) => m.get(&index).copied().unwrap_or(0.0),
        }
    }

    pub fn set(&mut self, index: u128, value: f64) -> Result<()> {
        self.check(index)?;
        match &mut self.storage {
            Storage::Dense(v) => v[index as usize] = value,
            Storage::Sparse(m) => {
                m.insert(index, value);
            }
        }
        Ok(())
    }

    pub fn value(&self, s: &[usize], a: &[usize]) -> f64 {
        self.get_unchecked(self.index_of(s, a))
    }

    /// `max |Q̂_i|` over all entries.
    pub fn sup_norm(&self) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Storage::Sparse(m) => m.values().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Entries in index order; `None` for sparse tables.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(v) => Some(v),
            Storage::Sparse(_) => None,
        }
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out.storage {
            Storage::Dense(v) => v.iter_mut().for_each(|x| *x *= c),
            Storage::Sparse(m) => m.values_mut().for_each(|x| *x *= c),
        }
        out
    }
}

/// `Q̂(z_prev) ← (1 − α) Q̂(z_prev) + α (r_prev + γ Q̂(z_next))`.
pub fn critic_td_step(
    table: &mut TruncatedQTable,
    z_prev: u128,
    z_next: u128,
    r_prev: f64,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    let old = table.get(z_prev)?;
    let next = table.get(z_next)?;
    table.set(z_prev, (1.0 - alpha) * old + alpha * (r_prev + gamma * next))
}

/// Critic step sizes `α_t = h / (t + t0)` and the inner-loop length `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSchedule {
    pub h: f64,
    pub t0: f64,
    pub horizon: usize,
}

impl CriticSchedule {
    pub fn new(h: f64, t0: f64, horizon: usize) -> Result<Self> {
        let s = CriticSchedule { h, t0, horizon };
        s.validate()?;
        Ok(s)
    }

    /// Requires `h > 0` and `t0 ≥ max(1, h)` so that every `α_t ∈ (0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidParameter(format!("critic h must be positive, got {}", self.h)));
        }
        if !(self.t0.is_finite() && self.t0 >= 1.0 && self.t0 >= self.h) {
            return Err(Error::InvalidParameter(format!(
                "critic t0 must be at least max(1, h) = {}, got {}",
                self.h.max(1.0),
                self.t0
            )));
        }
        Ok(())
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.h / (t as f64 + self.t0)
    }
}

/// Runs the TD critic on `T` transitions of one trajectory.
pub fn critic_on_trajectory(
    mdp: &NetworkedMdp,
    traj: &Trajectory,
    kappa: usize,
    schedule: &CriticSchedule,
    exec: Execution,
) -> Result<Vec<TruncatedQTable>> {
    let mut tables = (0..mdp.n())
        .map(|i| TruncatedQTable::zeros(mdp, i, kappa))
        .collect::<Result<Vec<_>>>()?;
    let gamma = mdp.gamma();
    let steps = traj.len();
    exec.for_each_mut(&mut tables, |i, table| {
        let mut prev = table.index_of(traj.state(0), traj.action(0));
        for t in 1..steps {
            let next = table.index_of(traj.state(t), traj.action(t));
            let r = traj.rewards(t - 1)[i];
            critic_td_step(table, prev, next, r, schedule.alpha(t - 1), gamma)
                .expect("trajectory indices lie inside the table");
            prev = next;
        }
    });
    Ok(tables)
}

/// Samples one trajectory of `T + 1` steps and trains every agent's table on it.
pub fn run_critic<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    kappa: usize,
    schedule: &CriticSchedule,
    key: SeedKey,
    exec: Execution,
) -> Result<(Vec<TruncatedQTable>, Trajectory)> {
    schedule.validate()?;
    let traj = rollout(mdp, policy, schedule.horizon, key)?;
    let tables = critic_on_trajectory(mdp, &traj, kappa, schedule, exec)?;
    Ok((tables, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::line_env;
    use crate::graph::Graph;
    use crate::mdp::{LocalContext, LocalDynamics, LocalSpace};
    use crate::policy::LocalizedPolicyTable;
    use std::sync::Arc;

    fn table(mdp: &NetworkedMdp, i: usize, kappa: usize) -> TruncatedQTable {
        TruncatedQTable::zeros(mdp, i, kappa).unwrap()
    }

    #[test]
    fn td_step_examples() {
        let mdp = line_env(2, 0.7).unwrap();
        let mut q = table(&mdp, 0, 1);
        assert_eq!(q.size(), 16);
        critic_td_step(&mut q, 3, 5, 1.0, 0.1, 0.7).unwrap();
        assert!((q.get(3).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!((0..16).filter(|&k| q.get(k).unwrap() != 0.0).count(), 1);

        let mut q = table(&mdp, 0, 1);
        q.set(2, 2.0).unwrap();
        q.set(7, 1.0).unwrap();
        critic_td_step(&mut q, 2, 7, 0.5, 0.5, 0.7).unwrap();
        assert!((q.get(2).unwrap() - 1.6).abs() < 1e-15);
        assert!(critic_td_step(&mut q, 16, 0, 0.0, 0.5, 0.7).is_err());
    }

    #[test]
    fn zero_reward_keeps_zero_table() {
        let mdp = line_env(3, 0.7).unwrap();
        let mut q = table(&mdp, 1, 1);
        let size = q.size();
        for k in 0..size {
            critic_td_step(&mut q, k, (k * 7) % size, 0.0, 0.3, 0.7).unwrap();
        }
        assert_eq!(q.sup_norm(), 0.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(CriticSchedule::new(50.0, 1000.0, 10).is_ok());
        assert!(CriticSchedule::new(0.0, 1000.0, 10).is_err());
        assert!(CriticSchedule::new(5.0, 2.0, 10).is_err());
        let s = CriticSchedule::new(50.0, 1000.0, 10).unwrap();
        assert!((s.alpha(0) - 0.05).abs() < 1e-15);
        assert!((s.alpha(1000) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn horizon_zero_leaves_tables_zero() {
        let mdp = line_env(4, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let s = CriticSchedule::new(1.0, 1.0, 0).unwrap();
        let (tables, traj) = run_critic(&mdp, &policy, 1, &s, SeedKey::new(1), Execution::Sequential).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(tables.iter().all(|t| t.sup_norm() == 0.0));
    }

    #[derive(Debug)]
    struct Constant;

    impl LocalDynamics for Constant {
        fn transition_probs(&self, _: &LocalContext<'_>, out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn reward(&self, _: &LocalContext<'_>) -> f64 {
            1.0
        }
    }

    #[test]
    fn single_state_converges_to_geometric_sum() {
        let mdp = NetworkedMdp::new(
            "constant",
            Graph::new(1, &[]).unwrap(),
            vec![LocalSpace::new(1, 1).unwrap()],
            0.7,
            1.0,
            vec![vec![1.0]],
            Arc::new(Constant),
        )
        .unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let s = CriticSchedule::new(50.0, 1000.0, 100_000).unwrap();
        let (tables, _) = run_critic(&mdp, &policy, 0, &s, SeedKey::new(3), Execution::Sequential).unwrap();
        assert!((tables[0].get(0).unwrap() - 1.0 / 0.3).abs() < 0.05);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mdp = line_env(5, 0.8).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let s = CriticSchedule::new(10.0, 100.0, 2_000).unwrap();
        let (a, _) = run_critic(&mdp, &policy, 1, &s, SeedKey::new(9), Execution::Parallel).unwrap();
        let (b, _) = run_critic(&mdp, &policy, 1, &s, SeedKey::new(9), Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entries_stay_within_reward_bound() {
        let mdp = line_env(4, 0.9).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let s = CriticSchedule::new(1.0, 1.0, 5_000).unwrap();
        let (tables, _) = run_critic(&mdp, &policy, 2, &s, SeedKey::new(4), Execution::Parallel).unwrap();
        let bound = mdp.reward_bound() / (1.0 - mdp.gamma());
        for t in &tables {
            assert!(t.dense_values().unwrap().iter().all(|&q| (0.0..=bound).contains(&q)));
        }
    }
}
