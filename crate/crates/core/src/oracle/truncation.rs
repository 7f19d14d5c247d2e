//! Truncated Q-functions, measured decay and the bound report.

use serde::Serialize;

use crate::codec::MixedRadixCodec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::NetworkedMdp;
use crate::policy::LocalizedPolicyTable;

use super::chain::{build_chain, discounted_visitation, exact_q, ExactQ, GlobalChain};
use super::gradient::{exact_gradient_from, truncated_gradient_from};

/// Normalisation tolerance for explicit tail weights.
const WEIGHT_TOLERANCE: f64 = 1e-10;

/// How `Q_i` is averaged over configurations outside `N_i^κ`.
#[derive(Clone, Debug, PartialEq)]
pub enum TailWeights {
    Uniform,
    /// `weights[head][tail]`, non-negative and summing to one per head.
    Explicit(Vec<Vec<f64>>),
}

/// `Q̂_i(s_{N_i^κ}, a_{N_i^κ}) = Σ_tail w(tail; head) Q_i(head, tail)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedQ {
    pub agent: usize,
    pub kappa: usize,
    pub members: Vec<usize>,
    /// Same layout as the learned table: member states, then member actions.
    pub head: MixedRadixCodec,
    pub values: Vec<f64>,
}

impl TruncatedQ {
    pub fn head_of(&self, chain: &GlobalChain, z: usize) -> usize {
        head_index(&self.head, &self.members, chain, z)
    }

    pub fn at_z(&self, chain: &GlobalChain, z: usize) -> f64 {
        self.values[self.head_of(chain, z)]
    }

    /// `max_z |Q_i(z) − Q̂_i(z)|`.
    pub fn sup_error(&self, chain: &GlobalChain, exact: &ExactQ) -> f64 {
        (0..chain.len()).fold(0.0, |m, z| m.max((exact.values[z] - self.at_z(chain, z)).abs()))
    }
}

fn codec_over(mdp_spaces: impl Fn(usize) -> (usize, usize), members: &[usize]) -> Result<MixedRadixCodec> {
    let mut radices: Vec<usize> = members.iter().map(|&j| mdp_spaces(j).0).collect();
    radices.extend(members.iter().map(|&j| mdp_spaces(j).1));
    MixedRadixCodec::new(radices)
}

fn head_index(codec: &MixedRadixCodec, members: &[usize], chain: &GlobalChain, z: usize) -> usize {
    let (s, a) = chain.config(z);
    codec.encode_iter(members.iter().map(|&j| s[j]).chain(members.iter().map(|&j| a[j]))) as usize
}

/// Local space sizes read back from the chain's decoded configurations.
fn local_sizes(chain: &GlobalChain) -> Vec<(usize, usize)> {
    let n = chain.n();
    let mut sizes = vec![(1, 1); n];
    for z in 0..chain.len() {
        let (s, a) = chain.config(z);
        for i in 0..n {
            sizes[i].0 = sizes[i].0.max(s[i] + 1);
            sizes[i].1 = sizes[i].1.max(a[i] + 1);
        }
    }
    sizes
}

pub fn truncated_q(
    chain: &GlobalChain,
    graph: &Graph,
    exact: &ExactQ,
    kappa: usize,
    weights: &TailWeights,
) -> Result<TruncatedQ> {
    let i = exact.agent;
    let nb = graph.khop_neighborhood(i, kappa)?;
    let tail_members = nb.complement(graph.n());
    let sizes = local_sizes(chain);
    let head = codec_over(|j| sizes[j], &nb.members)?;
    let tail = codec_over(|j| sizes[j], &tail_members)?;
    let (hs, ts) = (head.size() as usize, tail.size() as usize);
    let mut values = vec![0.0; hs];
    match weights {
        TailWeights::Uniform => {
            for z in 0..chain.len() {
                values[head_index(&head, &nb.members, chain, z)] += exact.values[z];
            }
            values.iter_mut().for_each(|v| *v /= ts as f64);
        }
        TailWeights::Explicit(w) => {
            if w.len() != hs || w.iter().any(|row| row.len() != ts) {
                return Err(Error::ShapeMismatch(format!(
                    "tail weights must be {hs} rows of {ts} entries"
                )));
            }
            for (h, row) in w.iter().enumerate() {
                let total: f64 = row.iter().sum();
                if row.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::InvalidParameter(format!(
                        "tail weights of head {h} are not a distribution (sum {total})"
                    )));
                }
            }
            for z in 0..chain.len() {
                let h = head_index(&head, &nb.members, chain, z);
                let t = head_index(&tail, &tail_members, chain, z);
                values[h] += w[h][t] * exact.values[z];
            }
        }
    }
    Ok(TruncatedQ {
        agent: i,
        kappa,
        members: nb.members,
        head,
        values,
    })
}

/// `variation[i][κ] = max_head (max_tail Q_i − min_tail Q_i)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfile {
    pub variation: Vec<Vec<f64>>,
}

impl DecayProfile {
    pub fn get(&self, agent: usize, kappa: usize) -> f64 {
        self.variation[agent][kappa]
    }
}

pub fn measure_decay(chain: &GlobalChain, graph: &Graph, qs: &[ExactQ], kappa_max: usize) -> Result<DecayProfile> {
    let sizes = local_sizes(chain);
    let mut variation = Vec::with_capacity(qs.len());
    for q in qs {
        let mut row = Vec::with_capacity(kappa_max + 1);
        for kappa in 0..=kappa_max {
            let nb = graph.khop_neighborhood(q.agent, kappa)?;
            let head = codec_over(|j| sizes[j], &nb.members)?;
            let mut lo = vec![f64::INFINITY; head.size() as usize];
            let mut hi = vec![f64::NEG_INFINITY; head.size() as usize];
            for z in 0..chain.len() {
                let h = head_index(&head, &nb.members, chain, z);
                lo[h] = lo[h].min(q.values[z]);
                hi[h] = hi[h].max(q.values[z]);
            }
            row.push(lo.iter().zip(&hi).fold(0.0f64, |m, (l, h)| m.max(h - l)));
        }
        variation.push(row);
    }
    Ok(DecayProfile { variation })
}

/// One `(agent, κ)` line of the decay report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationRow {
    pub agent: usize,
    pub kappa: usize,
    pub measured_variation: f64,
    /// `(r̄/(1−γ)) γ^{κ+1}`.
    pub lemma2a_bound: f64,
    pub trunc_q_error: f64,
    pub lemma3a_bound: f64,
    /// `‖ĥ_i − ∇_{θ_i} J‖`.
    pub grad_gap: f64,
    /// `(√2 r̄/(1−γ)²) γ^{κ+1}`.
    pub lemma3b_bound: f64,
}

/// Decay, truncation error and gradient gap for `κ = 0..=kappa_max` under one policy.
pub fn truncation_report(
    mdp: &NetworkedMdp,
    policy: &LocalizedPolicyTable,
    kappa_max: usize,
) -> Result<Vec<TruncationRow>> {
    let chain = build_chain(mdp, policy)?;
    let qs = exact_q(&chain)?;
    let d = discounted_visitation(&chain)?;
    let grad = exact_gradient_from(&chain, policy, &qs, &d);
    let profile = measure_decay(&chain, mdp.graph(), &qs, kappa_max)?;
    let gamma = mdp.gamma();
    let c = mdp.reward_bound() / (1.0 - gamma);
    let mut rows = Vec::new();
    for kappa in 0..=kappa_max {
        let tables = qs
            .iter()
            .map(|q| truncated_q(&chain, mdp.graph(), q, kappa, &TailWeights::Uniform))
            .collect::<Result<Vec<_>>>()?;
        let h = truncated_gradient_from(&chain, mdp, policy, &tables, kappa, &d)?;
        let decay = gamma.powi(kappa as i32 + 1);
        for (i, q) in qs.iter().enumerate() {
            let gap = h[i]
                .iter()
                .zip(&grad[i])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            rows.push(TruncationRow {
                agent: i,
                kappa,
                measured_variation: profile.get(i, kappa),
                lemma2a_bound: c * decay,
                trunc_q_error: tables[i].sup_error(&chain, q),
                lemma3a_bound: c * decay,
                grad_gap: gap,
                lemma3b_bound: 2f64.sqrt() * c / (1.0 - gamma) * decay,
            });
        }
    }
    rows.sort_by_key(|r| (r.agent, r.kappa));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::line_env;

    fn setup(n: usize) -> (NetworkedMdp, GlobalChain, Vec<ExactQ>) {
        let mdp = line_env(n, 0.7).unwrap();
        let chain = build_chain(&mdp, &LocalizedPolicyTable::uniform(mdp.spaces())).unwrap();
        let qs = exact_q(&chain).unwrap();
        (mdp, chain, qs)
    }

    #[test]
    fn full_neighbourhood_reproduces_exact_q() {
        let (mdp, chain, qs) = setup(3);
        let t = truncated_q(&chain, mdp.graph(), &qs[1], 2, &TailWeights::Uniform).unwrap();
        assert_eq!(t.values.len(), chain.len());
        assert!(t.sup_error(&chain, &qs[1]) == 0.0);
    }

    #[test]
    fn line_profile_positive_then_non_increasing() {
        let (mdp, chain, qs) = setup(4);
        let profile = measure_decay(&chain, mdp.graph(), &qs, 3).unwrap();
        assert!(profile.get(0, 0) > 0.0);
        for i in 0..4 {
            for k in 0..3 {
                assert!(profile.get(i, k + 1) <= profile.get(i, k) + 1e-12);
                assert!(profile.get(i, k) <= 0.7f64.powi(k as i32 + 1) / 0.3 + 1e-8);
            }
            assert_eq!(profile.get(i, 3), 0.0);
        }
    }

    #[test]
    fn uniform_error_within_measured_variation() {
        let (mdp, chain, qs) = setup(4);
        let profile = measure_decay(&chain, mdp.graph(), &qs, 1).unwrap();
        for q in &qs {
            let t = truncated_q(&chain, mdp.graph(), q, 1, &TailWeights::Uniform).unwrap();
            assert!(t.sup_error(&chain, q) <= profile.get(q.agent, 1) + 1e-12);
        }
    }

    #[test]
    fn explicit_weights_validated() {
        let (mdp, chain, qs) = setup(2);
        // κ = 0 for agent 0: head (s_0, a_0) has 4 values, tail (s_1, a_1) has 4
        let bad = TailWeights::Explicit(vec![vec![0.5, 0.5, 0.5, 0.0]; 4]);
        assert!(truncated_q(&chain, mdp.graph(), &qs[0], 0, &bad).is_err());
        let point = TailWeights::Explicit(vec![vec![1.0, 0.0, 0.0, 0.0]; 4]);
        let t = truncated_q(&chain, mdp.graph(), &qs[0], 0, &point).unwrap();
        let uniform = TailWeights::Explicit(vec![vec![0.25; 4]; 4]);
        let u = truncated_q(&chain, mdp.graph(), &qs[0], 0, &uniform).unwrap();
        let d = truncated_q(&chain, mdp.graph(), &qs[0], 0, &TailWeights::Uniform).unwrap();
        for (a, b) in u.values.iter().zip(&d.values) {
            assert!((a - b).abs() < 1e-12);
        }
        // point mass on tail (s_1, a_1) = (0, 0)
        for h in 0..4 {
            let z = chain.index(&[h % 2, 0], &[h / 2, 0]).unwrap();
            assert_eq!(t.values[h], qs[0].values[z]);
        }
    }

    #[test]
    fn report_gradient_gap_shrinks() {
        let mdp = line_env(4, 0.7).unwrap();
        let rows = truncation_report(&mdp, &LocalizedPolicyTable::uniform(mdp.spaces()), 3).unwrap();
        assert_eq!(rows.len(), 16);
        for r in &rows {
            assert!(r.grad_gap <= r.lemma3b_bound + 1e-8);
            assert!(r.trunc_q_error <= r.lemma3a_bound + 1e-8);
        }
        for i in 0..4 {
            let gaps: Vec<f64> = rows.iter().filter(|r| r.agent == i).map(|r| r.grad_gap).collect();
            assert!(gaps[0] >= gaps[1] - 1e-12 && gaps[1] >= gaps[2] - 1e-12);
            assert!(gaps[3] <= 1e-8);
        }
    }
}
