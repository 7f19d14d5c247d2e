//! The outer actor-critic loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::NetworkedMdp;
use crate::parallel::Execution;
use crate::policy::LocalizedPolicyTable;
use crate::rng::SeedKey;
use crate::sac::actor::{actor_gradient, norm, ActorSchedule};
use crate::sac::critic::{run_critic, CriticSchedule};

/// Slack on the runtime sanity bounds for floating-point accumulation.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub kappa: usize,
    pub critic: CriticSchedule,
    pub actor: ActorSchedule,
}

/// Diagnostics of outer iteration `m`, produced before `θ(m)` is updated.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub m: usize,
    pub eta_m: f64,
    /// `‖Q̂_i^T‖_∞` per agent.
    pub q_sup: Vec<f64>,
    /// `‖ĝ_i(m)‖` per agent.
    pub grad_norm: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: LocalizedPolicyTable,
    pub reports: Vec<IterationReport>,
}

/// Trains from the uniform policy. See [`train_from`].
pub fn train(
    mdp: &NetworkedMdp,
    spec: &TrainSpec,
    key: SeedKey,
    exec: Execution,
    on_iteration: impl FnMut(&IterationReport, &LocalizedPolicyTable) -> Result<()>,
) -> Result<TrainOutcome> {
    train_from(mdp, LocalizedPolicyTable::uniform(mdp.spaces()), spec, key, exec, on_iteration)
}

/// Runs `M` iterations of critic, gradient estimate and ascent step.
///
/// Iteration `m` samples its trajectory from `key.child(m)`; tables start
/// from zero every iteration. `on_iteration` sees the report together with
/// `θ(m)`, the policy that generated the iteration's trajectory. Every
/// iteration checks `0 ≤ Q̂ ≤ r̄/(1−γ)` and `‖ĝ_i‖ ≤ √2 r̄/(1−γ)²`.
pub fn train_from(
    mdp: &NetworkedMdp,
    mut policy: LocalizedPolicyTable,
    spec: &TrainSpec,
    key: SeedKey,
    exec: Execution,
    mut on_iteration: impl FnMut(&IterationReport, &LocalizedPolicyTable) -> Result<()>,
) -> Result<TrainOutcome> {
    spec.critic.validate()?;
    spec.actor.validate()?;
    let gamma = mdp.gamma();
    let q_bound = mdp.reward_bound() / (1.0 - gamma);
    let g_bound = 2f64.sqrt() * q_bound / (1.0 - gamma);
    let mut reports = Vec::with_capacity(spec.actor.iterations);
    for m in 0..spec.actor.iterations {
        let (tables, traj) = run_critic(mdp, &policy, spec.kappa, &spec.critic, key.child(m as u64), exec)?;
        let q_sup: Vec<f64> = tables.iter().map(|t| t.sup_norm()).collect();
        if let Some((i, q)) = q_sup.iter().enumerate().find(|(_, &q)| q > q_bound * (1.0 + BOUND_SLACK)) {
            return Err(Error::Numerical(format!(
                "iteration {m}: critic of agent {i} reached {q}, above r̄/(1−γ) = {q_bound}"
            )));
        }
        let grads = actor_gradient(&traj, &tables, &policy, gamma, exec)?;
        let grad_norm: Vec<f64> = grads.iter().map(|g| norm(g)).collect();
        if let Some((i, g)) = grad_norm.iter().enumerate().find(|(_, &g)| g > g_bound * (1.0 + BOUND_SLACK)) {
            return Err(Error::Numerical(format!(
                "iteration {m}: gradient norm {g} of agent {i} exceeds {g_bound}"
            )));
        }
        let report = IterationReport {
            m,
            eta_m: spec.actor.eta_m(m),
            q_sup,
            grad_norm,
        };
        on_iteration(&report, &policy)?;
        policy.apply_gradient(&grads, report.eta_m)?;
        reports.push(report);
    }
    Ok(TrainOutcome { policy, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::line_env;

    fn spec(kappa: usize, iterations: usize) -> TrainSpec {
        TrainSpec {
            kappa,
            critic: CriticSchedule::new(10.0, 100.0, 400).unwrap(),
            actor: ActorSchedule::new(1.0, iterations).unwrap(),
        }
    }

    #[test]
    fn zero_iterations_return_uniform_policy() {
        let mdp = line_env(4, 0.7).unwrap();
        let out = train(&mdp, &spec(1, 0), SeedKey::new(1), Execution::Parallel, |_, _| Ok(())).unwrap();
        assert_eq!(out.policy, LocalizedPolicyTable::uniform(mdp.spaces()));
        assert!(out.reports.is_empty());
    }

    #[test]
    fn reproducible_across_execution_modes() {
        let mdp = line_env(4, 0.7).unwrap();
        let mut seen = 0;
        let a = train(&mdp, &spec(1, 5), SeedKey::new(11), Execution::Parallel, |r, _| {
            assert_eq!(r.m, seen);
            seen += 1;
            Ok(())
        })
        .unwrap();
        let b = train(&mdp, &spec(1, 5), SeedKey::new(11), Execution::Sequential, |_, _| Ok(())).unwrap();
        assert_eq!(seen, 5);
        assert_eq!(a.policy.to_json().unwrap(), b.policy.to_json().unwrap());
        assert_eq!(a.reports, b.reports);
    }

    #[test]
    fn callback_errors_abort() {
        let mdp = line_env(3, 0.7).unwrap();
        let res = train(&mdp, &spec(0, 3), SeedKey::new(2), Execution::Sequential, |r, _| {
            if r.m == 1 {
                Err(Error::Numerical("stop".into()))
            } else {
                Ok(())
            }
        });
        assert!(res.is_err());
    }
}
