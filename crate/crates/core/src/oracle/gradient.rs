//! Exact and truncated policy gradients by enumeration.

use nalgebra::DVector;

use crate::error::Result;
use crate::mdp::NetworkedMdp;
use crate::parallel::Execution;
use crate::policy::LocalizedPolicyTable;

use super::chain::{build_chain, discounted_visitation, exact_q, ExactQ, GlobalChain};
use super::truncation::{truncated_q, TailWeights, TruncatedQ};

/// `(1/(1−γ)) Σ_{s,a} π^θ(s) ζ(a|s) W_i(s,a) ∇_{θ_i} log ζ_i(a_i|s_i)` for every agent.
pub(crate) fn gradient_with(
    chain: &GlobalChain,
    policy: &LocalizedPolicyTable,
    visitation: &DVector<f64>,
    weight: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> Vec<Vec<f64>> {
    let scale = 1.0 / (1.0 - chain.gamma());
    Execution::default().map_range(chain.n(), |i| {
        let (states, actions) = policy.shape(i);
        let mut grad = vec![0.0; states * actions];
        let mut score = vec![0.0; actions];
        for z in 0..chain.len() {
            let (si, ai) = chain.split(z);
            let mass = visitation[si] * chain.policy()[(si, ai)];
            if mass == 0.0 {
                continue;
            }
            let w = mass * weight(i, z) * scale;
            if w == 0.0 {
                continue;
            }
            let (s, a) = chain.config(z);
            policy.score_row_into(i, s[i], a[i], &mut score);
            for (g, d) in grad[s[i] * actions..(s[i] + 1) * actions].iter_mut().zip(&score) {
                *g += w * d;
            }
        }
        grad
    })
}

/// `Q^θ = (1/n) Σ_i Q_i^θ`.
pub fn mean_q(qs: &[ExactQ]) -> DVector<f64> {
    let n = qs.len() as f64;
    qs.iter().fold(DVector::zeros(qs[0].values.len()), |acc, q| acc + &q.values) / n
}

/// `∇_{θ_i} J(θ)` from the policy gradient theorem.
pub fn exact_policy_gradient(mdp: &NetworkedMdp, policy: &LocalizedPolicyTable) -> Result<Vec<Vec<f64>>> {
    let chain = build_chain(mdp, policy)?;
    let qs = exact_q(&chain)?;
    let d = discounted_visitation(&chain)?;
    Ok(exact_gradient_from(&chain, policy, &qs, &d))
}

pub(crate) fn exact_gradient_from(
    chain: &GlobalChain,
    policy: &LocalizedPolicyTable,
    qs: &[ExactQ],
    d: &DVector<f64>,
) -> Vec<Vec<f64>> {
    let q = mean_q(qs);
    gradient_with(chain, policy, d, |_, z| q[z])
}

/// `ĥ_i(θ)`: the gradient with `Q^θ` replaced by
/// `(1/n) Σ_{j ∈ N_i^κ} Q̂_j(s_{N_j^κ}, a_{N_j^κ})`, uniform tail weights.
pub fn truncated_policy_gradient(
    mdp: &NetworkedMdp,
    policy: &LocalizedPolicyTable,
    kappa: usize,
) -> Result<Vec<Vec<f64>>> {
    let chain = build_chain(mdp, policy)?;
    let qs = exact_q(&chain)?;
    let d = discounted_visitation(&chain)?;
    let tables = qs
        .iter()
        .map(|q| truncated_q(&chain, mdp.graph(), q, kappa, &TailWeights::Uniform))
        .collect::<Result<Vec<_>>>()?;
    truncated_gradient_from(&chain, mdp, policy, &tables, kappa, &d)
}

pub(crate) fn truncated_gradient_from(
    chain: &GlobalChain,
    mdp: &NetworkedMdp,
    policy: &LocalizedPolicyTable,
    tables: &[TruncatedQ],
    kappa: usize,
    d: &DVector<f64>,
) -> Result<Vec<Vec<f64>>> {
    let n = chain.n();
    let hoods = (0..n)
        .map(|i| mdp.graph().khop_neighborhood(i, kappa))
        .collect::<Result<Vec<_>>>()?;
    // per-z truncated values, Q̂_j(z) for every j
    let values: Vec<Vec<f64>> = tables
        .iter()
        .map(|t| (0..chain.len()).map(|z| t.at_z(chain, z)).collect())
        .collect();
    let scale = 1.0 / n as f64;
    Ok(gradient_with(chain, policy, d, |i, z| {
        hoods[i].members.iter().map(|&j| values[j][z]).sum::<f64>() * scale
    }))
}
