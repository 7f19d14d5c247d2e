//! The κ-hop policy-gradient actor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Trajectory;
use crate::parallel::Execution;
use crate::policy::{LocalizedPolicy, LocalizedPolicyTable};
use crate::sac::critic::TruncatedQTable;

/// Actor step sizes `η_m = η / √(m + 1)` over `M` outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSchedule {
    pub eta: f64,
    pub iterations: usize,
}

impl ActorSchedule {
    pub fn new(eta: f64, iterations: usize) -> Result<Self> {
        let s = ActorSchedule { eta, iterations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("actor eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn eta_m(&self, m: usize) -> f64 {
        self.eta / ((m + 1) as f64).sqrt()
    }
}

/// `ĝ_i = Σ_t γ^t (1/n) Σ_{j ∈ N_i^κ} Q̂_j(z_j(t)) ∇_{θ_i} log ζ_i(a_i(t) | s_i(t))`.
///
/// `tables[i]` must cover `N_i^κ`; its member list doubles as the set of
/// agents whose estimates enter `ĝ_i`.
pub fn actor_gradient(
    traj: &Trajectory,
    tables: &[TruncatedQTable],
    policy: &LocalizedPolicyTable,
    gamma: f64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let n = traj.n();
    if tables.len() != n || policy.n_agents() != n {
        return Err(Error::ShapeMismatch(format!(
            "trajectory has {n} agents, {} tables, policy has {}",
            tables.len(),
            policy.n_agents()
        )));
    }
    if let Some((i, _)) = tables.iter().enumerate().find(|(i, t)| t.agent() != *i) {
        return Err(Error::ShapeMismatch(format!("table {i} belongs to another agent")));
    }
    // terms with γ^t below the smallest normal double are dropped
    let mut steps = 0;
    let mut discount = 1.0;
    while steps < traj.len() && discount >= f64::MIN_POSITIVE {
        steps += 1;
        discount *= gamma;
    }
    // q[j][t] = Q̂_j(z_j(t))
    let q: Vec<Vec<f64>> = exec.map_range(n, |j| {
        (0..steps)
            .map(|t| tables[j].value(traj.state(t), traj.action(t)))
            .collect()
    });
    let scale = 1.0 / n as f64;
    Ok(exec.map_range(n, |i| {
        let (states, actions) = policy.shape(i);
        let mut grad = vec![0.0; states * actions];
        let mut score = vec![0.0; actions];
        let mut discount = 1.0;
        for t in 0..steps {
            let weight: f64 = tables[i].members().iter().map(|&j| q[j][t]).sum::<f64>() * scale * discount;
            discount *= gamma;
            if weight == 0.0 {
                continue;
            }
            let s = traj.state(t)[i];
            policy.score_row_into(i, s, traj.action(t)[i], &mut score);
            for (g, d) in grad[s * actions..(s + 1) * actions].iter_mut().zip(&score) {
                *g += weight * d;
            }
        }
        grad
    }))
}

/// Euclidean norm of a flattened gradient.
pub fn norm(grad: &[f64]) -> f64 {
    grad.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::line_env;
    use crate::mdp::rollout;
    use crate::rng::SeedKey;
    use crate::sac::critic::{run_critic, CriticSchedule};

    #[test]
    fn eta_schedule() {
        let s = ActorSchedule::new(0.1, 10).unwrap();
        assert!((s.eta_m(0) - 0.1).abs() < 1e-15);
        assert!((s.eta_m(3) - 0.05).abs() < 1e-15);
        assert!(ActorSchedule::new(0.0, 1).is_err());
    }

    #[test]
    fn zero_tables_give_zero_gradient() {
        let mdp = line_env(4, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let traj = rollout(&mdp, &policy, 20, SeedKey::new(2)).unwrap();
        let tables: Vec<_> = (0..4).map(|i| TruncatedQTable::zeros(&mdp, i, 1).unwrap()).collect();
        let g = actor_gradient(&traj, &tables, &policy, 0.7, Execution::Sequential).unwrap();
        assert!(g.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_term_when_horizon_zero() {
        let mdp = line_env(2, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let traj = rollout(&mdp, &policy, 0, SeedKey::new(5)).unwrap();
        let mut tables: Vec<_> = (0..2).map(|i| TruncatedQTable::zeros(&mdp, i, 0).unwrap()).collect();
        let z0 = tables[0].index_of(traj.state(0), traj.action(0));
        tables[0].set(z0, 2.0).unwrap();
        let g = actor_gradient(&traj, &tables, &policy, 0.7, Execution::Sequential).unwrap();
        let expect: Vec<f64> = policy
            .log_policy_grad(0, traj.state(0)[0], traj.action(0)[0])
            .iter()
            .map(|x| 0.5 * 2.0 * x)
            .collect();
        assert_eq!(g[0], expect);
        assert!(g[1].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_in_tables_and_bounded() {
        let mdp = line_env(5, 0.7).unwrap();
        let policy = LocalizedPolicyTable::uniform(mdp.spaces());
        let s = CriticSchedule::new(5.0, 10.0, 300).unwrap();
        let (tables, traj) = run_critic(&mdp, &policy, 1, &s, SeedKey::new(8), Execution::Parallel).unwrap();
        let g = actor_gradient(&traj, &tables, &policy, 0.7, Execution::Parallel).unwrap();
        let scaled: Vec<_> = tables.iter().map(|t| t.scaled(3.0)).collect();
        let g3 = actor_gradient(&traj, &scaled, &policy, 0.7, Execution::Sequential).unwrap();
        for (a, b) in g.iter().flatten().zip(g3.iter().flatten()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let bound = 2f64.sqrt() / (0.3f64 * 0.3);
        assert!(g.iter().all(|gi| norm(gi) <= bound));
    }
}
