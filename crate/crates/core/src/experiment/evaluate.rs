//! Policy evaluation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{rollout, NetworkedMdp};
use crate::oracle::exact_return;
use crate::parallel::Execution;
use crate::policy::LocalizedPolicy;
use crate::rng::SeedKey;
use crate::stats::mean_se;

use super::config::{EvalMethod, EvaluationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// `T_eval = ⌈log(tail_tol (1−γ) / r̄) / log γ⌉`, so that the omitted tail
/// `Σ_{t > T_eval} γ^t r̄ ≤ tail_tol`.
pub fn eval_horizon(gamma: f64, reward_bound: f64, tail_tol: f64) -> usize {
    let ratio = tail_tol * (1.0 - gamma) / reward_bound;
    if ratio >= 1.0 {
        return 0;
    }
    (ratio.ln() / gamma.ln()).ceil() as usize
}

/// Monte-Carlo estimate of `J(θ)` from `episodes` independent rollouts of
/// length `T_eval + 1`. Episode `k` uses the streams under `key.child(k)`.
pub fn evaluate_policy<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    episodes: usize,
    tail_tol: f64,
    key: SeedKey,
    exec: Execution,
) -> Result<Estimate> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("at least one evaluation episode is required".into()));
    }
    let gamma = mdp.gamma();
    let horizon = eval_horizon(gamma, mdp.reward_bound(), tail_tol);
    let returns = exec
        .map_range(episodes, |k| {
            let traj = rollout(mdp, policy, horizon, key.child(k as u64))?;
            let mut total = 0.0;
            let mut discount = 1.0;
            for t in 0..traj.len() {
                total += discount * traj.global_reward(t);
                discount *= gamma;
            }
            Ok(total)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_se(&returns);
    Ok(Estimate { mean, se })
}

/// Evaluates with the configured method; exact estimates carry zero error.
pub fn evaluate<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    spec: &EvaluationSpec,
    key: SeedKey,
    exec: Execution,
) -> Result<Estimate> {
    match spec.method {
        EvalMethod::Exact => Ok(Estimate {
            mean: exact_return(mdp, policy)?,
            se: 0.0,
        }),
        EvalMethod::MonteCarlo => evaluate_policy(mdp, policy, spec.episodes, spec.tail_tol, key, exec),
    }
}
